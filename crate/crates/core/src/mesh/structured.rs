use super::{bounding_diameter, MeshTopology, MixedDimMesh, Point, SNAP_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn unit() -> Self {
        Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Uniform 1D grid on `[0, length]` with boundary tags `left` and `right`.
pub fn build_interval_mesh(length: f64, num_cells: usize) -> Result<MixedDimMesh> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::Config(format!("interval length must be positive, got {length}")));
    }
    if num_cells == 0 {
        return Err(Error::Config("interval needs at least one cell".into()));
    }
    let h = length / num_cells as f64;
    let points = (0..=num_cells)
        .map(|k| [if k == num_cells { length } else { k as f64 * h }, 0.0])
        .collect();
    MeshTopology {
        dim: 1,
        points,
        cells: (0..num_cells).map(|k| vec![k, k + 1]).collect(),
        boundary: vec![
            ("left".into(), vec![vec![0]]),
            ("right".into(), vec![vec![num_cells]]),
        ],
        fractures: Vec::new(),
        intersections: None,
    }
    .build()
}

struct Grid {
    nx: usize,
    ny: usize,
    domain: Rect,
    hx: f64,
    hy: f64,
    tol: f64,
}

impl Grid {
    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    fn snap(&self, value: f64, origin: f64, h: f64, n: usize) -> Option<usize> {
        let k = ((value - origin) / h).round();
        if k < 0.0 || k > n as f64 {
            return None;
        }
        ((value - (origin + k * h)).abs() <= self.tol).then_some(k as usize)
    }

    fn snap_point(&self, p: Point) -> (Option<usize>, Option<usize>) {
        (
            self.snap(p[0], self.domain.x0, self.hx, self.nx),
            self.snap(p[1], self.domain.y0, self.hy, self.ny),
        )
    }

    fn coord(&self, i: usize, j: usize) -> Point {
        let x = if i == self.nx { self.domain.x1 } else { self.domain.x0 + i as f64 * self.hx };
        let y = if j == self.ny { self.domain.y1 } else { self.domain.y0 + j as f64 * self.hy };
        [x, y]
    }
}

/// Cartesian grid of `nx * ny` quadrilaterals with boundary tags `bottom`,
/// `right`, `top`, `left`. Fracture polylines must run along grid lines.
pub fn build_structured_2d(
    nx: usize,
    ny: usize,
    domain: Rect,
    fractures: &[Vec<Point>],
) -> Result<MixedDimMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Config(format!("grid needs nx, ny >= 1, got {nx} x {ny}")));
    }
    if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
        return Err(Error::Config(format!("degenerate domain {domain:?}")));
    }
    let diameter = bounding_diameter(&[[domain.x0, domain.y0], [domain.x1, domain.y1]]);
    let grid = Grid {
        nx,
        ny,
        domain,
        hx: (domain.x1 - domain.x0) / nx as f64,
        hy: (domain.y1 - domain.y0) / ny as f64,
        tol: SNAP_TOLERANCE * diameter,
    };

    let mut points = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            points.push(grid.coord(i, j));
        }
    }
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![
                grid.node(i, j),
                grid.node(i + 1, j),
                grid.node(i + 1, j + 1),
                grid.node(i, j + 1),
            ]);
        }
    }
    let boundary = vec![
        ("bottom".to_string(), (0..nx).map(|i| vec![grid.node(i, 0), grid.node(i + 1, 0)]).collect()),
        ("right".to_string(), (0..ny).map(|j| vec![grid.node(nx, j), grid.node(nx, j + 1)]).collect()),
        ("top".to_string(), (0..nx).map(|i| vec![grid.node(i + 1, ny), grid.node(i, ny)]).collect()),
        ("left".to_string(), (0..ny).map(|j| vec![grid.node(0, j + 1), grid.node(0, j)]).collect()),
    ];

    let mut fracture_edges = Vec::with_capacity(fractures.len());
    for (f, polyline) in fractures.iter().enumerate() {
        if polyline.len() < 2 {
            return Err(Error::Config(format!("fracture {f} needs at least two points")));
        }
        let mut edges = Vec::new();
        for seg in polyline.windows(2) {
            let (p, q) = (seg[0], seg[1]);
            let bad = || {
                Error::Config(format!(
                    "fracture {f} segment ({}, {}) -> ({}, {}) is not aligned with the grid lines",
                    p[0], p[1], q[0], q[1]
                ))
            };
            let (Some(i0), Some(j0)) = grid.snap_point(p) else { return Err(bad()) };
            let (Some(i1), Some(j1)) = grid.snap_point(q) else { return Err(bad()) };
            if i0 != i1 && j0 != j1 {
                return Err(bad());
            }
            if i0 == i1 && j0 == j1 {
                continue;
            }
            if i0 == i1 {
                let (step, n) = if j1 > j0 { (1isize, j1 - j0) } else { (-1, j0 - j1) };
                for k in 0..n {
                    let a = (j0 as isize + step * k as isize) as usize;
                    let b = (a as isize + step) as usize;
                    edges.push([grid.node(i0, a), grid.node(i0, b)]);
                }
            } else {
                let (step, n) = if i1 > i0 { (1isize, i1 - i0) } else { (-1, i0 - i1) };
                for k in 0..n {
                    let a = (i0 as isize + step * k as isize) as usize;
                    let b = (a as isize + step) as usize;
                    edges.push([grid.node(a, j0), grid.node(b, j0)]);
                }
            }
        }
        if edges.is_empty() {
            return Err(Error::Config(format!("fracture {f} has zero length after snapping")));
        }
        fracture_edges.push(edges);
    }

    MeshTopology {
        dim: 2,
        points,
        cells,
        boundary,
        fractures: fracture_edges,
        intersections: None,
    }
    .build()
}

/// Grid-aligned staircase from `from` to `to` (both snapped to the nearest
/// grid node) that stays within half a cell of the straight segment.
pub fn staircase_polyline(from: Point, to: Point, nx: usize, ny: usize, domain: Rect) -> Vec<Point> {
    let hx = (domain.x1 - domain.x0) / nx as f64;
    let hy = (domain.y1 - domain.y0) / ny as f64;
    let to_node = |p: Point| -> (i64, i64) {
        (
            ((p[0] - domain.x0) / hx).round() as i64,
            ((p[1] - domain.y0) / hy).round() as i64,
        )
    };
    let at = |i: i64, j: i64| -> Point { [domain.x0 + i as f64 * hx, domain.y0 + j as f64 * hy] };
    let (mut i, mut j) = to_node(from);
    let (ie, je) = to_node(to);
    let (di, dj) = ((ie - i).signum(), (je - j).signum());
    let (ni, nj) = ((ie - i).abs(), (je - j).abs());
    let mut path = vec![at(i, j)];
    // walk node to node, always taking the move that keeps closer to the line
    let mut taken_i = 0;
    let mut taken_j = 0;
    while taken_i < ni || taken_j < nj {
        let along_boundary_i = j == 0 || j == ny as i64;
        let along_boundary_j = i == 0 || i == nx as i64;
        let step_i = if taken_j == nj {
            true
        } else if taken_i == ni {
            false
        } else if along_boundary_i != along_boundary_j {
            along_boundary_j
        } else {
            // compare progress fractions along each axis
            (2 * taken_i + 1) * nj < (2 * taken_j + 1) * ni
        };
        if step_i {
            i += di;
            taken_i += 1;
        } else {
            j += dj;
            taken_j += 1;
        }
        path.push(at(i, j));
    }
    simplify_collinear(path)
}

fn simplify_collinear(path: Vec<Point>) -> Vec<Point> {
    if path.len() <= 2 {
        return path;
    }
    let mut out = vec![path[0]];
    for k in 1..path.len() - 1 {
        let (a, b, c) = (out[out.len() - 1], path[k], path[k + 1]);
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross != 0.0 {
            out.push(b);
        }
    }
    out.push(path[path.len() - 1]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{FaceKind, FractureFaceKind, TipKind};

    #[test]
    fn interval_four_cells() {
        let m = build_interval_mesh(1.0, 4).unwrap();
        assert_eq!(m.cells.len(), 4);
        assert_eq!(m.faces.len(), 5);
        assert!(m.cells.iter().all(|c| (c.volume - 0.25).abs() < 1e-15));
        let boundary = m
            .faces
            .iter()
            .filter(|f| matches!(f.kind, FaceKind::Boundary { .. }))
            .count();
        assert_eq!(boundary, 2);
    }

    #[test]
    fn interval_single_cell() {
        let m = build_interval_mesh(1.0, 1).unwrap();
        assert_eq!(m.cells.len(), 1);
        assert!(m.faces.iter().all(|f| matches!(f.kind, FaceKind::Boundary { .. })));
        assert_eq!(m.faces[0].normal, [-1.0, 0.0]);
        assert_eq!(m.faces[1].normal, [1.0, 0.0]);
    }

    #[test]
    fn interval_centroids() {
        let m = build_interval_mesh(2.0, 8).unwrap();
        for (k, c) in m.cells.iter().enumerate() {
            assert!((c.centroid[0] - (0.125 + 0.25 * k as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn interval_rejects_bad_input() {
        assert!(build_interval_mesh(0.0, 3).is_err());
        assert!(build_interval_mesh(1.0, 0).is_err());
        assert!(build_interval_mesh(-1.0, 3).is_err());
    }

    #[test]
    fn vertical_fracture_on_ten_by_ten() {
        let m = build_structured_2d(10, 10, Rect::unit(), &[vec![[0.5, 0.2], [0.5, 0.8]]]).unwrap();
        assert_eq!(m.fractures.len(), 1);
        let fr = &m.fractures[0];
        // covered edges: y from 0.2 to 0.8 in steps of 0.1
        assert_eq!(fr.cells.len(), 6);
        for c in &fr.cells {
            assert_ne!(c.plus_face, c.minus_face);
            let (pf, mf) = (&m.faces[c.plus_face], &m.faces[c.minus_face]);
            assert_eq!(pf.vertices.len(), 2);
            assert!((pf.area - c.measure).abs() < 1e-15 && (mf.area - c.measure).abs() < 1e-15);
            // tangent +y, normal -x: plus side is the left cell
            assert!(m.cells[pf.cell].centroid[0] < 0.5);
            assert!(m.cells[mf.cell].centroid[0] > 0.5);
        }
        let tips: Vec<_> = fr
            .faces
            .iter()
            .filter(|f| matches!(f.kind, FractureFaceKind::Tip(TipKind::Immersed)))
            .collect();
        assert_eq!(tips.len(), 2);
        assert_eq!(fr.faces.len(), 7);
        assert!((m.total_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plain_grid_has_no_coupling() {
        let m = build_structured_2d(3, 2, Rect::unit(), &[]).unwrap();
        assert_eq!(m.cells.len(), 6);
        assert!(m.fractures.is_empty() && m.intersections.is_empty());
        // 3*3 horizontal + 4*2 vertical edges
        assert_eq!(m.faces.len(), 17);
        assert_eq!(m.boundary_tags, vec!["bottom", "right", "top", "left"]);
    }

    #[test]
    fn crossing_fractures_share_one_intersection() {
        let m = build_structured_2d(
            10,
            10,
            Rect::unit(),
            &[vec![[0.5, 0.2], [0.5, 0.8]], vec![[0.2, 0.5], [0.8, 0.5]]],
        )
        .unwrap();
        assert_eq!(m.intersections.len(), 1);
        let x = &m.intersections[0];
        assert_eq!(x.incident.len(), 4);
        assert!((x.point[0] - 0.5).abs() < 1e-15 && (x.point[1] - 0.5).abs() < 1e-15);
        for &(f, face) in &x.incident {
            assert_eq!(
                m.fractures[f].faces[face].kind,
                FractureFaceKind::Tip(TipKind::Intersection { id: 0 })
            );
        }
    }

    #[test]
    fn t_junction_has_three_incident_faces() {
        let m = build_structured_2d(
            10,
            10,
            Rect::unit(),
            &[vec![[0.5, 0.2], [0.5, 0.8]], vec![[0.2, 0.5], [0.5, 0.5]]],
        )
        .unwrap();
        assert_eq!(m.intersections.len(), 1);
        assert_eq!(m.intersections[0].incident.len(), 3);
    }

    #[test]
    fn boundary_touching_tip_is_tagged() {
        let m = build_structured_2d(4, 4, Rect::unit(), &[vec![[0.5, 0.0], [0.5, 0.5]]]).unwrap();
        let bottom = m.tag_id("bottom").unwrap();
        assert!(m.fractures[0]
            .faces
            .iter()
            .any(|f| f.kind == FractureFaceKind::Tip(TipKind::Boundary { tag: bottom })));
    }

    #[test]
    fn misaligned_segment_is_rejected() {
        let err = build_structured_2d(10, 10, Rect::unit(), &[vec![[0.1, 0.1], [0.9, 0.8]]])
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(0.1, 0.1) -> (0.9, 0.8)"), "{msg}");
        // off-grid line
        assert!(build_structured_2d(10, 10, Rect::unit(), &[vec![[0.55, 0.1], [0.55, 0.8]]]).is_err());
    }

    #[test]
    fn snapping_absorbs_float_noise() {
        let m = build_structured_2d(10, 10, Rect::unit(), &[vec![[0.3 + 1e-12, 0.1], [0.3, 0.7]]]).unwrap();
        assert_eq!(m.fractures[0].cells.len(), 6);
    }

    #[test]
    fn staircase_is_axis_aligned_and_close() {
        let d = Rect::unit();
        let path = staircase_polyline([0.1, 0.0], [0.9, 0.8], 10, 10, d);
        assert!((path[0][0] - 0.1).abs() < 1e-12 && path[0][1].abs() < 1e-12);
        let last = path[path.len() - 1];
        assert!((last[0] - 0.9).abs() < 1e-12 && (last[1] - 0.8).abs() < 1e-12);
        for w in path.windows(2) {
            assert!(w[0][0] == w[1][0] || w[0][1] == w[1][1]);
        }
        for p in &path {
            // distance to the line y = x - 0.1
            let dist = (p[1] - p[0] + 0.1).abs() / 2f64.sqrt();
            assert!(dist <= 0.1, "{p:?}");
        }
        let m = build_structured_2d(10, 10, d, &[path]).unwrap();
        assert_eq!(m.fractures[0].cells.len(), 16);
    }
}
