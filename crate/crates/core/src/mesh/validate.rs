use std::fmt;

use super::{distance, FaceKind, FractureFaceKind, MixedDimMesh, Side, TipKind};

/// Geometric tolerance relative to the domain diameter.
const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveVolume { cell: usize, volume: f64 },
    NonPositiveArea { face: usize, area: f64 },
    FaceAdjacency { face: usize, message: String },
    /// Fracture cell and coupled bulk face do not coincide.
    GeometricIdentity { fracture: usize, cell: usize, face: usize, deviation: f64 },
    Coupling { fracture: usize, cell: usize, message: String },
    DanglingIntersection { intersection: usize },
    IntersectionIncidence { intersection: usize, message: String },
    FractureTopology { fracture: usize, face: usize, message: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveVolume { cell, volume } => {
                write!(f, "cell {cell}: non-positive volume {volume}")
            }
            Violation::NonPositiveArea { face, area } => {
                write!(f, "face {face}: non-positive area {area}")
            }
            Violation::FaceAdjacency { face, message } => write!(f, "face {face}: {message}"),
            Violation::GeometricIdentity { fracture, cell, face, deviation } => write!(
                f,
                "fracture {fracture} cell {cell}: differs from bulk face {face} by {deviation:e}"
            ),
            Violation::Coupling { fracture, cell, message } => {
                write!(f, "fracture {fracture} cell {cell}: {message}")
            }
            Violation::DanglingIntersection { intersection } => {
                write!(f, "intersection {intersection}: no incident fracture faces")
            }
            Violation::IntersectionIncidence { intersection, message } => {
                write!(f, "intersection {intersection}: {message}")
            }
            Violation::FractureTopology { fracture, face, message } => {
                write!(f, "fracture {fracture} face {face}: {message}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of the mesh and lists the failures.
pub fn validate_conformity(mesh: &MixedDimMesh) -> ValidationReport {
    let mut out = Vec::new();
    let ncells = mesh.cells.len();
    let tol = IDENTITY_TOLERANCE * mesh.diameter().max(f64::MIN_POSITIVE);

    for (c, cell) in mesh.cells.iter().enumerate() {
        if !(cell.volume > 0.0) {
            out.push(Violation::NonPositiveVolume { cell: c, volume: cell.volume });
        }
    }
    let mut copies = vec![0usize; mesh.faces.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        if !(face.area > 0.0) {
            out.push(Violation::NonPositiveArea { face: f, area: face.area });
        }
        if face.cell >= ncells {
            out.push(Violation::FaceAdjacency {
                face: f,
                message: format!("owner {} out of range", face.cell),
            });
            continue;
        }
        match face.kind {
            FaceKind::Interior { neighbor } => {
                if neighbor >= ncells || neighbor == face.cell {
                    out.push(Violation::FaceAdjacency {
                        face: f,
                        message: format!("interior face needs two distinct cells, got {} and {neighbor}", face.cell),
                    });
                }
            }
            FaceKind::Boundary { tag } => {
                if tag >= mesh.boundary_tags.len() {
                    out.push(Violation::FaceAdjacency {
                        face: f,
                        message: format!("unknown boundary tag {tag}"),
                    });
                }
            }
            FaceKind::Fracture { fracture, cell, .. } => {
                let known = mesh
                    .fractures
                    .get(fracture)
                    .is_some_and(|fr| cell < fr.cells.len());
                if !known {
                    out.push(Violation::FaceAdjacency {
                        face: f,
                        message: format!("refers to missing fracture {fracture} cell {cell}"),
                    });
                }
            }
        }
    }

    for (i, fr) in mesh.fractures.iter().enumerate() {
        for (j, cell) in fr.cells.iter().enumerate() {
            if !(cell.measure > 0.0) {
                out.push(Violation::Coupling {
                    fracture: i,
                    cell: j,
                    message: format!("non-positive measure {}", cell.measure),
                });
            }
            if cell.plus_face == cell.minus_face {
                out.push(Violation::Coupling {
                    fracture: i,
                    cell: j,
                    message: "both sides coupled to the same bulk face".into(),
                });
            }
            for (face_id, side) in [(cell.plus_face, Side::Plus), (cell.minus_face, Side::Minus)] {
                let Some(face) = mesh.faces.get(face_id) else {
                    out.push(Violation::Coupling {
                        fracture: i,
                        cell: j,
                        message: format!("coupled face {face_id} does not exist"),
                    });
                    continue;
                };
                copies[face_id] += 1;
                if face.kind != (FaceKind::Fracture { fracture: i, cell: j, side }) {
                    out.push(Violation::Coupling {
                        fracture: i,
                        cell: j,
                        message: format!("bulk face {face_id} does not point back ({:?})", face.kind),
                    });
                }
                if face.vertices.len() != 2 {
                    out.push(Violation::Coupling {
                        fracture: i,
                        cell: j,
                        message: format!("bulk face {face_id} is not an edge"),
                    });
                    continue;
                }
                let (a, b) = (mesh.points[face.vertices[0]], mesh.points[face.vertices[1]]);
                let [p, q] = cell.endpoints;
                let deviation = (distance(a, p).max(distance(b, q)))
                    .min(distance(a, q).max(distance(b, p)));
                if !(deviation <= tol) {
                    out.push(Violation::GeometricIdentity { fracture: i, cell: j, face: face_id, deviation });
                }
                if !((cell.measure - face.area).abs() <= IDENTITY_TOLERANCE * face.area) {
                    out.push(Violation::Coupling {
                        fracture: i,
                        cell: j,
                        message: format!("measure {} differs from face area {}", cell.measure, face.area),
                    });
                }
            }
        }
        for (k, face) in fr.faces.iter().enumerate() {
            if face.cell >= fr.cells.len() {
                out.push(Violation::FractureTopology {
                    fracture: i,
                    face: k,
                    message: format!("owner {} out of range", face.cell),
                });
                continue;
            }
            match face.kind {
                FractureFaceKind::Internal { neighbor } => {
                    if neighbor >= fr.cells.len() || neighbor == face.cell {
                        out.push(Violation::FractureTopology {
                            fracture: i,
                            face: k,
                            message: format!("bad neighbour {neighbor}"),
                        });
                    }
                }
                FractureFaceKind::Tip(TipKind::Intersection { id }) => {
                    let listed = mesh
                        .intersections
                        .get(id)
                        .is_some_and(|x| x.incident.contains(&(i, k)));
                    if !listed {
                        out.push(Violation::FractureTopology {
                            fracture: i,
                            face: k,
                            message: format!("tip not listed by intersection {id}"),
                        });
                    }
                }
                FractureFaceKind::Tip(_) => {}
            }
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        let expected = usize::from(matches!(face.kind, FaceKind::Fracture { .. }));
        if copies[f] != expected {
            out.push(Violation::FaceAdjacency {
                face: f,
                message: format!("coupled {} times, expected {expected}", copies[f]),
            });
        }
    }

    for (x, inter) in mesh.intersections.iter().enumerate() {
        if inter.incident.is_empty() {
            out.push(Violation::DanglingIntersection { intersection: x });
        }
        for &(i, k) in &inter.incident {
            let face = mesh.fractures.get(i).and_then(|fr| fr.faces.get(k));
            match face {
                Some(face) if face.kind == FractureFaceKind::Tip(TipKind::Intersection { id: x }) => {
                    if !(distance(face.point, inter.point) <= tol) {
                        out.push(Violation::IntersectionIncidence {
                            intersection: x,
                            message: format!("fracture {i} face {k} is away from the point"),
                        });
                    }
                }
                _ => out.push(Violation::IntersectionIncidence {
                    intersection: x,
                    message: format!("fracture {i} face {k} is not an attached tip"),
                }),
            }
        }
    }
    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_2d, Intersection, Rect};

    fn sample() -> MixedDimMesh {
        build_structured_2d(
            8,
            8,
            Rect::unit(),
            &[vec![[0.5, 0.125], [0.5, 0.875]], vec![[0.25, 0.5], [0.75, 0.5]]],
        )
        .unwrap()
    }

    #[test]
    fn valid_mesh_has_empty_report() {
        assert!(validate_conformity(&sample()).is_empty());
    }

    #[test]
    fn perturbed_vertex_breaks_identity() {
        let mut m = sample();
        m.fractures[0].cells[2].endpoints[0][0] += 1e-3;
        let report = validate_conformity(&m);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::GeometricIdentity { fracture: 0, cell: 2, .. })));
    }

    #[test]
    fn dangling_intersection_is_reported() {
        let mut m = sample();
        m.intersections.push(Intersection { vertex: 0, point: [0.0, 0.0], incident: Vec::new() });
        let report = validate_conformity(&m);
        assert!(report
            .violations
            .contains(&Violation::DanglingIntersection { intersection: 1 }));
    }

    #[test]
    fn non_positive_volume_is_reported() {
        let mut m = sample();
        m.cells[3].volume = 0.0;
        assert!(!validate_conformity(&m).is_empty());
    }
}
