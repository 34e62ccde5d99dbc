//! Two-point flux finite volumes on a mixed-dimensional mesh.
//!
//! Unknowns are numbered bulk cells first, then the cells of each fracture,
//! then the intersections (see [`DofLayout`]). Every flux connection is a
//! [`FluxFace`] carrying a signed flux that is positive from `inner` to
//! `outer`; bulk-fracture couplings have the bulk cell as `inner`, fracture
//! tips attached to an intersection have the fracture cell as `inner`.

use crate::constitutive::EPS_MIN;
use crate::error::{Error, Result};
use crate::mesh::{FaceKind, FractureFaceKind, MixedDimMesh, Point, Side, TipKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subdomain {
    Bulk,
    Fracture(usize),
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofLayout {
    pub num_bulk: usize,
    /// Start of each fracture's block; the last entry is the first
    /// intersection unknown.
    pub fracture_offsets: Vec<usize>,
    pub num_intersections: usize,
}

impl DofLayout {
    pub fn new(mesh: &MixedDimMesh) -> Self {
        let mut offsets = Vec::with_capacity(mesh.fractures.len() + 1);
        let mut next = mesh.cells.len();
        for fr in &mesh.fractures {
            offsets.push(next);
            next += fr.cells.len();
        }
        offsets.push(next);
        DofLayout {
            num_bulk: mesh.cells.len(),
            fracture_offsets: offsets,
            num_intersections: mesh.intersections.len(),
        }
    }

    pub fn total(&self) -> usize {
        self.intersection_offset() + self.num_intersections
    }

    pub fn num_fractures(&self) -> usize {
        self.fracture_offsets.len() - 1
    }

    pub fn fracture_dof(&self, fracture: usize, cell: usize) -> usize {
        self.fracture_offsets[fracture] + cell
    }

    pub fn fracture_range(&self, fracture: usize) -> std::ops::Range<usize> {
        self.fracture_offsets[fracture]..self.fracture_offsets[fracture + 1]
    }

    pub fn intersection_offset(&self) -> usize {
        *self.fracture_offsets.last().expect("offsets are never empty")
    }

    pub fn intersection_dof(&self, id: usize) -> usize {
        self.intersection_offset() + id
    }

    pub fn subdomain_of(&self, dof: usize) -> Subdomain {
        if dof < self.num_bulk {
            return Subdomain::Bulk;
        }
        if dof >= self.intersection_offset() {
            return Subdomain::Intersection;
        }
        let f = self.fracture_offsets.partition_point(|&o| o <= dof) - 1;
        Subdomain::Fracture(f)
    }

    /// Named blocks in output order: `bulk`, `fracture_<i>`, `intersections`.
    pub fn subdomains(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut out = vec![("bulk".to_string(), 0..self.num_bulk)];
        for i in 0..self.num_fractures() {
            out.push((format!("fracture_{i}"), self.fracture_range(i)));
        }
        if self.num_intersections > 0 {
            out.push((
                "intersections".to_string(),
                self.intersection_offset()..self.total(),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxKind {
    /// Bulk face between two cells.
    Interior { face: usize },
    /// Bulk face on the domain boundary.
    Boundary { face: usize, tag: usize },
    /// Bulk cell to fracture cell through one face copy.
    Coupling { face: usize, fracture: usize, cell: usize, side: Side },
    FractureInternal { fracture: usize, face: usize },
    /// Fracture tip lying on the domain boundary.
    FractureBoundary { fracture: usize, face: usize, tag: usize },
    /// Fracture tip to intersection.
    Intersection { fracture: usize, face: usize, id: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxFace {
    pub kind: FluxKind,
    pub inner: usize,
    /// `None` on the domain boundary.
    pub outer: Option<usize>,
    pub area: f64,
    /// Distance from the inner unknown's centroid to the face.
    pub d_inner: f64,
    /// Distance from the outer centroid; zero for couplings and boundaries.
    pub d_outer: f64,
}

impl FluxFace {
    pub fn boundary_tag(&self) -> Option<usize> {
        match self.kind {
            FluxKind::Boundary { tag, .. } | FluxKind::FractureBoundary { tag, .. } => Some(tag),
            _ => None,
        }
    }
}

/// All flux connections of a mesh, in a fixed order.
#[derive(Debug, Clone)]
pub struct FluxTopology {
    pub layout: DofLayout,
    pub faces: Vec<FluxFace>,
    /// Cell volume, fracture cell length, or 1 for an intersection.
    pub measure: Vec<f64>,
    pub centroid: Vec<Point>,
}

fn normal_distance(from: Point, to: Point, normal: Point) -> f64 {
    ((to[0] - from[0]) * normal[0] + (to[1] - from[1]) * normal[1]).abs()
}

fn euclid(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl FluxTopology {
    pub fn new(mesh: &MixedDimMesh) -> Result<Self> {
        let layout = DofLayout::new(mesh);
        let mut measure = Vec::with_capacity(layout.total());
        let mut centroid = Vec::with_capacity(layout.total());
        for c in &mesh.cells {
            measure.push(c.volume);
            centroid.push(c.centroid);
        }
        for fr in &mesh.fractures {
            for c in &fr.cells {
                measure.push(c.measure);
                centroid.push(c.centroid);
            }
        }
        for x in &mesh.intersections {
            measure.push(1.0);
            centroid.push(x.point);
        }

        let positive = |d: f64, what: String| -> Result<f64> {
            if d > 0.0 {
                Ok(d)
            } else {
                Err(Error::Mesh(format!("zero centroid-to-face distance at {what}")))
            }
        };
        let mut faces = Vec::new();
        for (f, face) in mesh.faces.iter().enumerate() {
            let d_inner = positive(
                normal_distance(mesh.cells[face.cell].centroid, face.centroid, face.normal),
                format!("bulk face {f}"),
            )?;
            let (kind, outer, d_outer) = match face.kind {
                FaceKind::Interior { neighbor } => (
                    FluxKind::Interior { face: f },
                    Some(neighbor),
                    positive(
                        normal_distance(mesh.cells[neighbor].centroid, face.centroid, face.normal),
                        format!("bulk face {f}"),
                    )?,
                ),
                FaceKind::Boundary { tag } => (FluxKind::Boundary { face: f, tag }, None, 0.0),
                FaceKind::Fracture { fracture, cell, side } => (
                    FluxKind::Coupling { face: f, fracture, cell, side },
                    Some(layout.fracture_dof(fracture, cell)),
                    0.0,
                ),
            };
            faces.push(FluxFace { kind, inner: face.cell, outer, area: face.area, d_inner, d_outer });
        }
        for (i, fr) in mesh.fractures.iter().enumerate() {
            for (k, face) in fr.faces.iter().enumerate() {
                let inner = layout.fracture_dof(i, face.cell);
                let d_inner = positive(
                    euclid(fr.cells[face.cell].centroid, face.point),
                    format!("fracture {i} face {k}"),
                )?;
                let (kind, outer, d_outer) = match face.kind {
                    FractureFaceKind::Internal { neighbor } => (
                        FluxKind::FractureInternal { fracture: i, face: k },
                        Some(layout.fracture_dof(i, neighbor)),
                        positive(
                            euclid(fr.cells[neighbor].centroid, face.point),
                            format!("fracture {i} face {k}"),
                        )?,
                    ),
                    FractureFaceKind::Tip(TipKind::Boundary { tag }) => {
                        (FluxKind::FractureBoundary { fracture: i, face: k, tag }, None, 0.0)
                    }
                    FractureFaceKind::Tip(TipKind::Intersection { id }) => (
                        FluxKind::Intersection { fracture: i, face: k, id },
                        Some(layout.intersection_dof(id)),
                        0.0,
                    ),
                    // closed by the tip condition
                    FractureFaceKind::Tip(TipKind::Immersed) => continue,
                };
                faces.push(FluxFace { kind, inner, outer, area: 1.0, d_inner, d_outer });
            }
        }
        Ok(FluxTopology { layout, faces, measure, centroid })
    }

    pub fn num_dofs(&self) -> usize {
        self.layout.total()
    }
}

/// `area / (d1/k1 + d2/k2)`, exactly zero if either coefficient vanishes.
pub fn harmonic_transmissibility(area: f64, d1: f64, k1: f64, d2: f64, k2: f64) -> f64 {
    if k1 <= 0.0 || k2 <= 0.0 {
        return 0.0;
    }
    area / (d1 / k1 + d2 / k2)
}

/// Half-cell transmissibility `area * k / d`.
pub fn half_transmissibility(area: f64, d: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    area * k / d
}

/// Per bulk face: harmonic transmissibility for interior faces, half-cell
/// transmissibility for boundary faces and fracture face copies.
pub fn tpfa_bulk(mesh: &MixedDimMesh, cell_coeff: &[f64]) -> Result<Vec<f64>> {
    if cell_coeff.len() != mesh.cells.len() {
        return Err(Error::Logic(format!(
            "{} coefficients for {} cells",
            cell_coeff.len(),
            mesh.cells.len()
        )));
    }
    if let Some(k) = cell_coeff.iter().find(|k| !(**k >= 0.0)) {
        return Err(Error::Logic(format!("negative diffusion coefficient {k}")));
    }
    mesh.faces
        .iter()
        .enumerate()
        .map(|(f, face)| {
            let d1 = normal_distance(mesh.cells[face.cell].centroid, face.centroid, face.normal);
            if !(d1 > 0.0) {
                return Err(Error::Mesh(format!("zero centroid-to-face distance at bulk face {f}")));
            }
            Ok(match face.kind {
                FaceKind::Interior { neighbor } => {
                    let d2 = normal_distance(mesh.cells[neighbor].centroid, face.centroid, face.normal);
                    if !(d2 > 0.0) {
                        return Err(Error::Mesh(format!(
                            "zero centroid-to-face distance at bulk face {f}"
                        )));
                    }
                    harmonic_transmissibility(face.area, d1, cell_coeff[face.cell], d2, cell_coeff[neighbor])
                }
                _ => half_transmissibility(face.area, d1, cell_coeff[face.cell]),
            })
        })
        .collect()
}

/// Normal exchange conductance `area * kappa_n / (mu * eps)` in series with
/// the half-transmissibility of the neighbouring higher-dimensional cell.
/// Vanishes exactly once the aperture sits at its floor.
pub fn coupling_transmissibility(eps: f64, kappa_n: f64, mu: f64, matrix_half_t: f64, area: f64) -> f64 {
    if eps <= EPS_MIN || kappa_n <= 0.0 || matrix_half_t <= 0.0 {
        return 0.0;
    }
    let interface = area * kappa_n / (mu * eps);
    if interface.is_infinite() {
        return matrix_half_t;
    }
    1.0 / (1.0 / interface + 1.0 / matrix_half_t)
}

/// Coefficients for one equation, indexed by unknown.
#[derive(Debug, Clone)]
pub struct FaceCoefficients {
    /// Conductivity along the subdomain (bulk cells and fracture cells).
    pub tangential: Vec<f64>,
    /// Normal exchange conductance per unit area, `kappa_n / (mu * eps)`, for
    /// fracture cells and intersections. Zero decouples the unknown.
    pub normal: Vec<f64>,
}

/// Transmissibility of every flux face.
pub fn transmissibilities(topo: &FluxTopology, coeff: &FaceCoefficients) -> Vec<f64> {
    topo.faces
        .iter()
        .map(|f| match f.kind {
            FluxKind::Interior { .. } | FluxKind::FractureInternal { .. } => {
                let o = f.outer.expect("interior faces have two sides");
                harmonic_transmissibility(f.area, f.d_inner, coeff.tangential[f.inner], f.d_outer, coeff.tangential[o])
            }
            FluxKind::Boundary { .. } | FluxKind::FractureBoundary { .. } => {
                half_transmissibility(f.area, f.d_inner, coeff.tangential[f.inner])
            }
            FluxKind::Coupling { .. } | FluxKind::Intersection { .. } => {
                let o = f.outer.expect("couplings have two sides");
                let half = half_transmissibility(f.area, f.d_inner, coeff.tangential[f.inner]);
                series(f.area * coeff.normal[o], half)
            }
        })
        .collect()
}

fn series(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    if a.is_infinite() {
        return b;
    }
    1.0 / (1.0 / a + 1.0 / b)
}

/// Upstream value on every flux face. Boundary faces with inflow take
/// `boundary_inflow(tag)`.
pub fn upwind_face_values(
    topo: &FluxTopology,
    face_flux: &[f64],
    values: &[f64],
    boundary_inflow: impl Fn(usize) -> f64,
) -> Vec<f64> {
    topo.faces
        .iter()
        .zip(face_flux)
        .map(|(f, &q)| {
            if q >= 0.0 {
                values[f.inner]
            } else {
                match f.outer {
                    Some(o) => values[o],
                    None => boundary_inflow(f.boundary_tag().expect("boundary face has a tag")),
                }
            }
        })
        .collect()
}

/// Net outflow of every unknown: `+flux` for the inner side, `-flux` for the
/// outer side.
pub fn assemble_mixed_divergence(topo: &FluxTopology, face_flux: &[f64]) -> Vec<f64> {
    let mut div = vec![0.0; topo.num_dofs()];
    for (f, &q) in topo.faces.iter().zip(face_flux) {
        div[f.inner] += q;
        if let Some(o) = f.outer {
            div[o] -= q;
        }
    }
    div
}

/// Net flux leaving the domain through boundary faces (inflow counts
/// negative).
pub fn boundary_outflow(topo: &FluxTopology, face_flux: &[f64]) -> f64 {
    topo.faces
        .iter()
        .zip(face_flux)
        .filter(|(f, _)| f.outer.is_none())
        .map(|(_, q)| q)
        .sum()
}

/// Flux leaving through outflow boundary faces only.
pub fn boundary_discharge(topo: &FluxTopology, face_flux: &[f64]) -> f64 {
    topo.faces
        .iter()
        .zip(face_flux)
        .filter(|(f, _)| f.outer.is_none())
        .map(|(_, q)| q.max(0.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_structured_2d, Rect};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_transmissibility(1.0, 0.5, 1.0, 0.5, 1.0), 1.0);
        assert_eq!(harmonic_transmissibility(1.0, 0.5, 1.0, 0.5, 0.0), 0.0);
        // 1 / (0.5 + 0.125)
        assert_relative_eq!(harmonic_transmissibility(1.0, 0.5, 1.0, 0.5, 4.0), 1.6, max_relative = 1e-15);
        assert_relative_eq!(harmonic_transmissibility(2.5, 0.5, 1.0, 0.5, 4.0), 4.0, max_relative = 1e-15);
    }

    #[test]
    fn tpfa_on_interval() {
        let m = build_interval_mesh(1.0, 2).unwrap();
        let t = tpfa_bulk(&m, &[1.0, 4.0]).unwrap();
        // faces: left boundary, interior, right boundary (in build order)
        let interior = m.faces.iter().position(|f| matches!(f.kind, FaceKind::Interior { .. })).unwrap();
        assert_relative_eq!(t[interior], 1.0 / (0.25 + 0.25 / 4.0), max_relative = 1e-15);
        assert!(tpfa_bulk(&m, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn coupling_examples() {
        assert_relative_eq!(
            coupling_transmissibility(1e-2, 1e2, 1.0, 2.0, 0.1),
            1.0 / (1.0 / (1e4 * 0.1) + 0.5),
            max_relative = 1e-15
        );
        assert_relative_eq!(coupling_transmissibility(1e-2, 1e2, 1.0, 2.0, 0.1), 1.996008, max_relative = 1e-6);
        assert_eq!(coupling_transmissibility(EPS_MIN, 1e2, 1.0, 2.0, 0.1), 0.0);
        assert_relative_eq!(coupling_transmissibility(1e-2, 1e300, 1e-300, 2.0, 0.1), 2.0, max_relative = 1e-12);
    }

    fn line_topology(n: usize) -> FluxTopology {
        FluxTopology::new(&build_interval_mesh(1.0, n).unwrap()).unwrap()
    }

    #[test]
    fn upwind_uniform_flux() {
        let topo = line_topology(3);
        let m = build_interval_mesh(1.0, 3).unwrap();
        // unit flux in +x everywhere
        let flux: Vec<f64> = topo
            .faces
            .iter()
            .map(|f| match f.kind {
                FluxKind::Interior { face } | FluxKind::Boundary { face, .. } => m.faces[face].normal[0],
                _ => unreachable!(),
            })
            .collect();
        let vals = upwind_face_values(&topo, &flux, &[1.0, 2.0, 3.0], |_| 0.5);
        let interior: Vec<f64> = topo
            .faces
            .iter()
            .zip(&vals)
            .filter(|(f, _)| matches!(f.kind, FluxKind::Interior { .. }))
            .map(|(_, v)| *v)
            .collect();
        assert_eq!(interior, vec![1.0, 2.0]);
        // left boundary is an inflow face
        let left = topo.faces.iter().position(|f| f.outer.is_none() && f.inner == 0).unwrap();
        assert_eq!(vals[left], 0.5);
    }

    #[test]
    fn zero_flux_gives_zero_divergence() {
        let m = build_structured_2d(4, 4, Rect::unit(), &[vec![[0.5, 0.25], [0.5, 0.75]]]).unwrap();
        let topo = FluxTopology::new(&m).unwrap();
        let div = assemble_mixed_divergence(&topo, &vec![0.0; topo.faces.len()]);
        assert!(div.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn telescoping_through_flux() {
        let topo = line_topology(5);
        let m = build_interval_mesh(1.0, 5).unwrap();
        let flux: Vec<f64> = topo
            .faces
            .iter()
            .map(|f| match f.kind {
                FluxKind::Interior { face } | FluxKind::Boundary { face, .. } => 2.0 * m.faces[face].normal[0],
                _ => unreachable!(),
            })
            .collect();
        let div = assemble_mixed_divergence(&topo, &flux);
        assert_eq!(div, vec![0.0; 5]);
        assert_eq!(boundary_outflow(&topo, &flux), 0.0);
        assert_eq!(boundary_discharge(&topo, &flux), 2.0);
    }

    #[test]
    fn fracture_fed_from_both_sides() {
        // 2x1 grid with the shared edge as a fracture of one cell
        let m = build_structured_2d(2, 1, Rect { x0: 0.0, x1: 2.0, y0: 0.0, y1: 1.0 }, &[vec![[1.0, 0.0], [1.0, 1.0]]])
            .unwrap();
        let topo = FluxTopology::new(&m).unwrap();
        assert_eq!(topo.num_dofs(), 3);
        let flux: Vec<f64> = topo
            .faces
            .iter()
            .map(|f| if matches!(f.kind, FluxKind::Coupling { .. }) { 1.0 } else { 0.0 })
            .collect();
        let div = assemble_mixed_divergence(&topo, &flux);
        assert_eq!(div[2], -2.0);
        assert_eq!(div[0], 1.0);
        assert_eq!(div[1], 1.0);
        // sealed tips: both fracture tips sit on the boundary here
        assert_eq!(
            topo.faces.iter().filter(|f| matches!(f.kind, FluxKind::FractureBoundary { .. })).count(),
            2
        );
    }

    #[test]
    fn upwind_coupling_takes_bulk_value_when_draining() {
        let m = build_structured_2d(2, 1, Rect { x0: 0.0, x1: 2.0, y0: 0.0, y1: 1.0 }, &[vec![[1.0, 0.0], [1.0, 1.0]]])
            .unwrap();
        let topo = FluxTopology::new(&m).unwrap();
        let flux: Vec<f64> = topo
            .faces
            .iter()
            .map(|f| match f.kind {
                FluxKind::Coupling { side: Side::Plus, .. } => 0.3,
                FluxKind::Coupling { side: Side::Minus, .. } => -0.3,
                _ => 0.0,
            })
            .collect();
        let values = [5.0, 7.0, 1.0];
        let up = upwind_face_values(&topo, &flux, &values, |_| 0.0);
        for (f, v) in topo.faces.iter().zip(&up) {
            match f.kind {
                FluxKind::Coupling { side: Side::Plus, .. } => assert_eq!(*v, values[f.inner]),
                FluxKind::Coupling { side: Side::Minus, .. } => assert_eq!(*v, 1.0),
                _ => {}
            }
        }
    }

    proptest! {
        #[test]
        fn divergence_sums_to_boundary_outflow(seed in proptest::collection::vec(-3.0f64..3.0, 200)) {
            let m = build_structured_2d(
                5, 4, Rect::unit(),
                &[vec![[0.4, 0.0], [0.4, 1.0]], vec![[0.0, 0.5], [0.8, 0.5]]],
            ).unwrap();
            let topo = FluxTopology::new(&m).unwrap();
            let flux: Vec<f64> = (0..topo.faces.len()).map(|k| seed[k % seed.len()] * (1.0 + k as f64)).collect();
            let div = assemble_mixed_divergence(&topo, &flux);
            let total: f64 = div.iter().sum();
            let out = boundary_outflow(&topo, &flux);
            let scale: f64 = flux.iter().map(|q| q.abs()).sum();
            prop_assert!((total - out).abs() <= 1e-13 * scale);
        }

        #[test]
        fn transmissibility_symmetric_and_homogeneous(
            k1 in 0.0f64..10.0, k2 in 0.0f64..10.0, d1 in 0.01f64..1.0, d2 in 0.01f64..1.0,
            area in 0.01f64..5.0, scale in 0.1f64..10.0,
        ) {
            let a = harmonic_transmissibility(area, d1, k1, d2, k2);
            let b = harmonic_transmissibility(area, d2, k2, d1, k1);
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
            let c = harmonic_transmissibility(scale * area, d1, k1, d2, k2);
            prop_assert!((c - scale * a).abs() <= 1e-13 * c.abs().max(1e-300));
            prop_assert!(a >= 0.0);
        }
    }
}
