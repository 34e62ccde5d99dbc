//! Mixed-dimensional meshes: a bulk grid (1D or 2D), fracture grids made of
//! bulk faces, and 0D intersection objects where fractures meet.
//!
//! Every fracture cell owns two copies of the bulk face it lies on, one for
//! each side. The `+` side is the one the fracture normal points into; the
//! normal is the tangent rotated 90 degrees counter-clockwise.

mod io;
mod structured;
mod validate;

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub use io::{load_mesh, parse_mesh, write_mesh, write_mesh_string};
pub use structured::{
    build_interval_mesh, build_structured_2d, staircase_polyline, Rect,
};
pub use validate::{validate_conformity, ValidationReport, Violation};

pub type Point = [f64; 2];

/// Relative snapping tolerance (times the domain diameter).
pub const SNAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone)]
pub struct BulkCell {
    pub vertices: Vec<usize>,
    pub centroid: Point,
    /// Length in 1D, area (per unit depth) in 2D.
    pub volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior { neighbor: usize },
    Boundary { tag: usize },
    /// One of the two copies of a face lying on a fracture.
    Fracture {
        fracture: usize,
        cell: usize,
        side: Side,
    },
}

#[derive(Debug, Clone)]
pub struct BulkFace {
    /// Owning cell; `normal` points out of it.
    pub cell: usize,
    pub kind: FaceKind,
    pub vertices: Vec<usize>,
    pub centroid: Point,
    /// 1 in 1D, edge length in 2D.
    pub area: f64,
    pub normal: Point,
}

#[derive(Debug, Clone)]
pub struct FractureCell {
    pub vertices: [usize; 2],
    pub endpoints: [Point; 2],
    pub centroid: Point,
    pub measure: f64,
    pub tangent: Point,
    pub normal: Point,
    /// Bulk face copy on the `+` side.
    pub plus_face: usize,
    /// Bulk face copy on the `-` side.
    pub minus_face: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TipKind {
    /// Fracture endpoint on the domain boundary.
    Boundary { tag: usize },
    /// Endpoint inside the domain, closed by the no-flow tip condition.
    Immersed,
    Intersection { id: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractureFaceKind {
    Internal { neighbor: usize },
    Tip(TipKind),
}

#[derive(Debug, Clone)]
pub struct FractureFace {
    pub cell: usize,
    pub kind: FractureFaceKind,
    pub vertex: usize,
    pub point: Point,
    /// Unit tangent pointing out of `cell`.
    pub normal: Point,
}

#[derive(Debug, Clone, Default)]
pub struct Fracture {
    pub cells: Vec<FractureCell>,
    pub faces: Vec<FractureFace>,
}

#[derive(Debug, Clone)]
pub struct Intersection {
    pub vertex: usize,
    pub point: Point,
    /// `(fracture, fracture face)` pairs meeting here.
    pub incident: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct MixedDimMesh {
    /// Bulk dimension, 1 or 2.
    pub dim: usize,
    pub points: Vec<Point>,
    pub cells: Vec<BulkCell>,
    pub faces: Vec<BulkFace>,
    pub fractures: Vec<Fracture>,
    pub intersections: Vec<Intersection>,
    /// Names of boundary segments, indexed by `FaceKind::Boundary::tag`.
    pub boundary_tags: Vec<String>,
}

impl MixedDimMesh {
    pub fn num_fracture_cells(&self) -> usize {
        self.fractures.iter().map(|f| f.cells.len()).sum()
    }

    pub fn tag_id(&self, name: &str) -> Option<usize> {
        self.boundary_tags.iter().position(|t| t == name)
    }

    /// Diagonal of the bounding box of all points.
    pub fn diameter(&self) -> f64 {
        bounding_diameter(&self.points)
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Bulk faces adjacent to each cell.
    pub fn cell_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cells.len()];
        for (f, face) in self.faces.iter().enumerate() {
            out[face.cell].push(f);
            if let FaceKind::Interior { neighbor } = face.kind {
                out[neighbor].push(f);
            }
        }
        out
    }
}

pub(crate) fn bounding_diameter(points: &[Point]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Undirected key of a bulk face: sorted vertex pair, or a single vertex in 1D.
type FaceKey = (usize, usize);

fn face_key(vertices: &[usize]) -> FaceKey {
    match vertices {
        [v] => (*v, usize::MAX),
        [a, b] => ((*a).min(*b), (*a).max(*b)),
        _ => unreachable!("faces have one or two vertices"),
    }
}

/// Topological description shared by the generators and the file reader.
#[derive(Debug, Clone, Default)]
pub(crate) struct MeshTopology {
    pub dim: usize,
    pub points: Vec<Point>,
    /// Vertex lists: two endpoints in 1D, a polygon in 2D.
    pub cells: Vec<Vec<usize>>,
    /// Boundary faces by vertices, grouped by tag name (in declaration order).
    pub boundary: Vec<(String, Vec<Vec<usize>>)>,
    /// Fracture cells as vertex pairs, one list per fracture.
    pub fractures: Vec<Vec<[usize; 2]>>,
    /// Declared intersection vertices; `None` means detect them.
    pub intersections: Option<Vec<usize>>,
}

fn polygon_geometry(points: &[Point], verts: &[usize]) -> (Point, f64) {
    let n = verts.len();
    let origin = points[verts[0]];
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..n {
        let a = sub(points[verts[k]], origin);
        let b = sub(points[verts[(k + 1) % n]], origin);
        let cross = a[0] * b[1] - b[0] * a[1];
        area2 += cross;
        cx += (a[0] + b[0]) * cross;
        cy += (a[1] + b[1]) * cross;
    }
    let area = 0.5 * area2;
    if area == 0.0 {
        return (origin, 0.0);
    }
    (
        [origin[0] + cx / (6.0 * area), origin[1] + cy / (6.0 * area)],
        area.abs(),
    )
}

impl MeshTopology {
    pub fn build(self) -> Result<MixedDimMesh> {
        let MeshTopology {
            dim,
            points,
            cells: cell_verts,
            boundary,
            fractures: fracture_edges,
            intersections: declared,
        } = self;
        if dim != 1 && dim != 2 {
            return Err(Error::Mesh(format!("unsupported bulk dimension {dim}")));
        }
        if cell_verts.is_empty() {
            return Err(Error::Mesh("mesh has no cells".into()));
        }
        let npts = points.len();
        let check_vertex = |v: usize, what: &str| -> Result<()> {
            if v >= npts {
                Err(Error::Mesh(format!("{what} references vertex {v}, only {npts} points")))
            } else {
                Ok(())
            }
        };

        let mut cells = Vec::with_capacity(cell_verts.len());
        for (c, verts) in cell_verts.iter().enumerate() {
            let expected_ok = if dim == 1 { verts.len() == 2 } else { verts.len() >= 3 };
            if !expected_ok {
                return Err(Error::Mesh(format!("cell {c} has {} vertices", verts.len())));
            }
            for &v in verts {
                check_vertex(v, &format!("cell {c}"))?;
            }
            let (centroid, volume) = if dim == 1 {
                let (a, b) = (points[verts[0]], points[verts[1]]);
                ([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])], distance(a, b))
            } else {
                polygon_geometry(&points, verts)
            };
            cells.push(BulkCell { vertices: verts.clone(), centroid, volume });
        }

        // local faces of every cell, in cell order
        let local_faces = |c: usize| -> Vec<Vec<usize>> {
            let v = &cell_verts[c];
            if dim == 1 {
                vec![vec![v[0]], vec![v[1]]]
            } else {
                (0..v.len()).map(|k| vec![v[k], v[(k + 1) % v.len()]]).collect()
            }
        };
        let mut adjacency: HashMap<FaceKey, Vec<usize>> = HashMap::new();
        let mut face_order: Vec<(FaceKey, Vec<usize>)> = Vec::new();
        for c in 0..cells.len() {
            for verts in local_faces(c) {
                let key = face_key(&verts);
                let entry = adjacency.entry(key).or_default();
                if entry.is_empty() {
                    face_order.push((key, verts));
                }
                entry.push(c);
            }
        }

        let mut boundary_tags: Vec<String> = Vec::new();
        let mut tag_of: HashMap<FaceKey, usize> = HashMap::new();
        for (name, faces) in &boundary {
            let tag = match boundary_tags.iter().position(|t| t == name) {
                Some(t) => t,
                None => {
                    boundary_tags.push(name.clone());
                    boundary_tags.len() - 1
                }
            };
            for verts in faces {
                for &v in verts {
                    check_vertex(v, &format!("boundary '{name}'"))?;
                }
                let key = face_key(verts);
                match adjacency.get(&key) {
                    Some(adj) if adj.len() == 1 => {}
                    _ => {
                        return Err(Error::Conformity(format!(
                            "boundary '{name}' face {verts:?} is not a boundary face of the bulk grid"
                        )))
                    }
                }
                if tag_of.insert(key, tag).is_some() {
                    return Err(Error::Conformity(format!(
                        "boundary face {verts:?} tagged more than once"
                    )));
                }
            }
        }

        let mut on_fracture: HashMap<FaceKey, (usize, usize)> = HashMap::new();
        for (i, edges) in fracture_edges.iter().enumerate() {
            for (j, e) in edges.iter().enumerate() {
                check_vertex(e[0], &format!("fracture {i} cell {j}"))?;
                check_vertex(e[1], &format!("fracture {i} cell {j}"))?;
                if e[0] == e[1] {
                    return Err(Error::Conformity(format!(
                        "fracture {i} cell {j} is degenerate"
                    )));
                }
                let key = if dim == 1 {
                    return Err(Error::Mesh("fractures need a 2D bulk".into()));
                } else {
                    face_key(e)
                };
                match adjacency.get(&key) {
                    Some(adj) if adj.len() == 2 => {}
                    Some(_) => {
                        return Err(Error::Conformity(format!(
                            "fracture {i} cell {j} lies on the domain boundary"
                        )))
                    }
                    None => {
                        return Err(Error::Conformity(format!(
                            "fracture {i} cell {j} ({:?}) does not match any bulk face",
                            e
                        )))
                    }
                }
                if let Some((i0, j0)) = on_fracture.insert(key, (i, j)) {
                    return Err(Error::Conformity(format!(
                        "fracture {i} cell {j} overlaps fracture {i0} cell {j0}"
                    )));
                }
            }
        }

        // bulk faces
        let mut untagged = None;
        let mut faces: Vec<BulkFace> = Vec::new();
        let mut fracture_faces: HashMap<(usize, usize), [Option<usize>; 2]> = HashMap::new();
        for (key, verts) in &face_order {
            let adj = &adjacency[key];
            let (centroid, area, tangent) = if dim == 1 {
                (points[verts[0]], 1.0, [0.0, 0.0])
            } else {
                let (a, b) = (points[verts[0]], points[verts[1]]);
                let d = sub(b, a);
                (
                    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
                    norm(d),
                    d,
                )
            };
            let outward = |cell: usize| -> Point {
                let away = sub(centroid, cells[cell].centroid);
                let mut n = if dim == 1 {
                    [away[0].signum(), 0.0]
                } else {
                    [tangent[1] / area, -tangent[0] / area]
                };
                if dot(n, away) < 0.0 {
                    n = [-n[0], -n[1]];
                }
                n
            };
            match adj.len() {
                1 => {
                    let tag = match tag_of.get(key) {
                        Some(&t) => t,
                        None => *untagged.get_or_insert_with(|| {
                            boundary_tags.push("boundary".into());
                            boundary_tags.len() - 1
                        }),
                    };
                    faces.push(BulkFace {
                        cell: adj[0],
                        kind: FaceKind::Boundary { tag },
                        vertices: verts.clone(),
                        centroid,
                        area,
                        normal: outward(adj[0]),
                    });
                }
                2 => {
                    if let Some(&(fracture, fcell)) = on_fracture.get(key) {
                        let e = fracture_edges[fracture][fcell];
                        let t = sub(points[e[1]], points[e[0]]);
                        let n_gamma = [-t[1], t[0]];
                        let mut slots = [None, None];
                        for &c in adj {
                            let side = if dot(sub(cells[c].centroid, centroid), n_gamma) > 0.0 {
                                Side::Plus
                            } else {
                                Side::Minus
                            };
                            let slot = if side == Side::Plus { 0 } else { 1 };
                            if slots[slot].is_some() {
                                return Err(Error::Conformity(format!(
                                    "fracture {fracture} cell {fcell} has both neighbours on one side"
                                )));
                            }
                            slots[slot] = Some(faces.len());
                            faces.push(BulkFace {
                                cell: c,
                                kind: FaceKind::Fracture { fracture, cell: fcell, side },
                                vertices: verts.clone(),
                                centroid,
                                area,
                                normal: outward(c),
                            });
                        }
                        fracture_faces.insert((fracture, fcell), slots);
                    } else {
                        faces.push(BulkFace {
                            cell: adj[0],
                            kind: FaceKind::Interior { neighbor: adj[1] },
                            vertices: verts.clone(),
                            centroid,
                            area,
                            normal: outward(adj[0]),
                        });
                    }
                }
                n => {
                    return Err(Error::Conformity(format!(
                        "bulk face {verts:?} is shared by {n} cells"
                    )))
                }
            }
        }

        // boundary vertices, for fracture tips touching the boundary
        let mut boundary_vertex: HashMap<usize, usize> = HashMap::new();
        for face in &faces {
            if let FaceKind::Boundary { tag } = face.kind {
                for &v in &face.vertices {
                    boundary_vertex.entry(v).or_insert(tag);
                }
            }
        }

        // which fractures touch each vertex
        let mut vertex_fractures: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, edges) in fracture_edges.iter().enumerate() {
            for e in edges {
                for &v in e {
                    let list = vertex_fractures.entry(v).or_default();
                    if !list.contains(&i) {
                        list.push(i);
                    }
                }
            }
        }
        let shared: Vec<usize> = vertex_fractures
            .iter()
            .filter(|(_, fs)| fs.len() >= 2)
            .map(|(&v, _)| v)
            .collect();
        let intersection_vertices = match declared {
            None => shared,
            Some(list) => {
                for &v in &shared {
                    if !list.contains(&v) {
                        return Err(Error::Conformity(format!(
                            "fractures {:?} meet at vertex {v} but no intersection is declared",
                            vertex_fractures[&v]
                        )));
                    }
                }
                for &v in &list {
                    check_vertex(v, "intersection")?;
                }
                list
            }
        };
        let intersection_of: HashMap<usize, usize> = intersection_vertices
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, k))
            .collect();
        let mut intersections: Vec<Intersection> = intersection_vertices
            .iter()
            .map(|&v| Intersection { vertex: v, point: points[v], incident: Vec::new() })
            .collect();

        let mut fractures = Vec::with_capacity(fracture_edges.len());
        for (i, edges) in fracture_edges.iter().enumerate() {
            let mut fcells = Vec::with_capacity(edges.len());
            let mut by_vertex: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (j, e) in edges.iter().enumerate() {
                let (a, b) = (points[e[0]], points[e[1]]);
                let d = sub(b, a);
                let measure = norm(d);
                let tangent = [d[0] / measure, d[1] / measure];
                let slots = fracture_faces[&(i, j)];
                fcells.push(FractureCell {
                    vertices: *e,
                    endpoints: [a, b],
                    centroid: [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
                    measure,
                    tangent,
                    normal: [-tangent[1], tangent[0]],
                    plus_face: slots[0].expect("plus copy"),
                    minus_face: slots[1].expect("minus copy"),
                });
                by_vertex.entry(e[0]).or_default().push(j);
                by_vertex.entry(e[1]).or_default().push(j);
            }
            let mut ffaces: Vec<FractureFace> = Vec::new();
            let mut emitted: HashMap<usize, ()> = HashMap::new();
            for (j, e) in edges.iter().enumerate() {
                for &v in e {
                    let incident = &by_vertex[&v];
                    let out_of = |c: usize| -> Point {
                        let d = sub(points[v], fcells[c].centroid);
                        let l = norm(d);
                        [d[0] / l, d[1] / l]
                    };
                    if let Some(&id) = intersection_of.get(&v) {
                        intersections[id].incident.push((i, ffaces.len()));
                        ffaces.push(FractureFace {
                            cell: j,
                            kind: FractureFaceKind::Tip(TipKind::Intersection { id }),
                            vertex: v,
                            point: points[v],
                            normal: out_of(j),
                        });
                        continue;
                    }
                    match incident.len() {
                        1 => {
                            let tip = match boundary_vertex.get(&v) {
                                Some(&tag) => TipKind::Boundary { tag },
                                None => TipKind::Immersed,
                            };
                            ffaces.push(FractureFace {
                                cell: j,
                                kind: FractureFaceKind::Tip(tip),
                                vertex: v,
                                point: points[v],
                                normal: out_of(j),
                            });
                        }
                        2 => {
                            if emitted.insert(v, ()).is_none() {
                                let other = if incident[0] == j { incident[1] } else { incident[0] };
                                ffaces.push(FractureFace {
                                    cell: j,
                                    kind: FractureFaceKind::Internal { neighbor: other },
                                    vertex: v,
                                    point: points[v],
                                    normal: out_of(j),
                                });
                            }
                        }
                        n => {
                            return Err(Error::Conformity(format!(
                                "fracture {i} branches at vertex {v} ({n} cells) without an intersection"
                            )))
                        }
                    }
                }
            }
            fractures.push(Fracture { cells: fcells, faces: ffaces });
        }

        let mesh = MixedDimMesh {
            dim,
            points,
            cells,
            faces,
            fractures,
            intersections,
            boundary_tags,
        };
        let report = validate_conformity(&mesh);
        if !report.is_empty() {
            return Err(Error::Conformity(report.to_string()));
        }
        Ok(mesh)
    }
}
