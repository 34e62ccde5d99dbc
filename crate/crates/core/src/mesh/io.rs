//! Text exchange format for mixed-dimensional meshes.
//!
//! ```text
//! mdmesh 1
//! points                # one point per line: x [y]
//! 0 0
//! ...
//! cells 2               # bulk dimension; one cell per line as vertex ids
//! 0 1 5 4               # (polygon in counter-clockwise order, or 2 ids in 1D)
//! faces 1               # optional; every bulk face once, as vertex ids
//! 0 1
//! boundary left         # boundary faces carrying a tag
//! 4 0
//! fracture 0            # fracture cells as vertex pairs; ids count from 0
//! 1 5
//! intersection 0        # one vertex id
//! 5
//! ```
//!
//! Blank lines and `#` comments are ignored. Untagged boundary faces get the
//! tag `boundary`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{face_key, FaceKind, MeshTopology, MixedDimMesh};
use crate::error::{Error, Result};

enum Section {
    None,
    Points,
    Cells,
    Faces,
    Boundary(usize),
    Fracture(usize),
    Intersection,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_ids(fields: &[&str], line: usize) -> Result<Vec<usize>> {
    fields
        .iter()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| parse_err(line, format!("expected a vertex index, got '{t}'")))
        })
        .collect()
}

fn parse_sequential_id(token: Option<&str>, expected: usize, what: &str, line: usize) -> Result<()> {
    let id: usize = token
        .ok_or_else(|| parse_err(line, format!("{what} section needs an id")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} id")))?;
    if id != expected {
        return Err(parse_err(line, format!("{what} ids must count up from 0; expected {expected}, got {id}")));
    }
    Ok(())
}

/// Parses the exchange format and validates the result.
pub fn parse_mesh(text: &str) -> Result<MixedDimMesh> {
    let mut topo = MeshTopology::default();
    let mut dim = None;
    let mut point_width = None;
    let mut declared_faces: Option<Vec<(usize, Vec<usize>)>> = None;
    let mut intersections = Vec::new();
    let mut section = Section::None;
    let mut seen_header = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if !seen_header {
            if fields != ["mdmesh", "1"] {
                return Err(parse_err(line, "expected header 'mdmesh 1'"));
            }
            seen_header = true;
            continue;
        }
        match fields[0] {
            "points" => {
                if fields.len() != 1 {
                    return Err(parse_err(line, "'points' takes no arguments"));
                }
                section = Section::Points;
                continue;
            }
            "cells" | "faces" => {
                let d: usize = fields
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(line, format!("'{}' needs a dimension", fields[0])))?;
                if fields[0] == "cells" {
                    if d != 1 && d != 2 {
                        return Err(parse_err(line, format!("unsupported cell dimension {d}")));
                    }
                    dim = Some(d);
                    section = Section::Cells;
                } else {
                    let Some(cd) = dim else {
                        return Err(parse_err(line, "'faces' must follow 'cells'"));
                    };
                    if d + 1 != cd {
                        return Err(parse_err(line, format!("face dimension {d} does not fit cells of dimension {cd}")));
                    }
                    declared_faces.get_or_insert_with(Vec::new);
                    section = Section::Faces;
                }
                continue;
            }
            "boundary" => {
                let name = fields
                    .get(1)
                    .ok_or_else(|| parse_err(line, "'boundary' needs a tag"))?;
                let slot = match topo.boundary.iter().position(|(n, _)| n == name) {
                    Some(s) => s,
                    None => {
                        topo.boundary.push((name.to_string(), Vec::new()));
                        topo.boundary.len() - 1
                    }
                };
                section = Section::Boundary(slot);
                continue;
            }
            "fracture" => {
                parse_sequential_id(fields.get(1).copied(), topo.fractures.len(), "fracture", line)?;
                topo.fractures.push(Vec::new());
                section = Section::Fracture(topo.fractures.len() - 1);
                continue;
            }
            "intersection" => {
                parse_sequential_id(fields.get(1).copied(), intersections.len(), "intersection", line)?;
                section = Section::Intersection;
                continue;
            }
            _ => {}
        }
        let face_width = dim.unwrap_or(2);
        match section {
            Section::None => return Err(parse_err(line, format!("'{content}' outside any section"))),
            Section::Points => {
                if fields.len() != 1 && fields.len() != 2 {
                    return Err(parse_err(line, "a point has one or two coordinates"));
                }
                if *point_width.get_or_insert(fields.len()) != fields.len() {
                    return Err(parse_err(line, "points must all have the same number of coordinates"));
                }
                let mut p = [0.0; 2];
                for (k, t) in fields.iter().enumerate() {
                    p[k] = t
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(line, format!("bad coordinate '{t}'")))?;
                }
                topo.points.push(p);
            }
            Section::Cells => {
                let ids = parse_ids(&fields, line)?;
                let ok = if dim == Some(1) { ids.len() == 2 } else { ids.len() >= 3 };
                if !ok {
                    return Err(parse_err(line, format!("cell has {} vertices", ids.len())));
                }
                topo.cells.push(ids);
            }
            Section::Faces => {
                let ids = parse_ids(&fields, line)?;
                if ids.len() != face_width {
                    return Err(parse_err(line, format!("a face has {face_width} vertices")));
                }
                declared_faces.get_or_insert_with(Vec::new).push((line, ids));
            }
            Section::Boundary(slot) => {
                let ids = parse_ids(&fields, line)?;
                if ids.len() != face_width {
                    return Err(parse_err(line, format!("a boundary face has {face_width} vertices")));
                }
                topo.boundary[slot].1.push(ids);
            }
            Section::Fracture(f) => {
                let ids = parse_ids(&fields, line)?;
                if ids.len() != 2 {
                    return Err(parse_err(line, "a fracture cell has 2 vertices"));
                }
                topo.fractures[f].push([ids[0], ids[1]]);
            }
            Section::Intersection => {
                let ids = parse_ids(&fields, line)?;
                if ids.len() != 1 {
                    return Err(parse_err(line, "an intersection is a single vertex"));
                }
                intersections.push(ids[0]);
                section = Section::None;
            }
        }
    }
    if !seen_header {
        return Err(parse_err(1, "empty mesh file"));
    }
    let Some(dim) = dim else {
        return Err(parse_err(text.lines().count().max(1), "missing 'cells' section"));
    };
    topo.dim = dim;
    topo.intersections = Some(intersections);
    let mesh = topo.build()?;

    if let Some(list) = declared_faces {
        let actual: HashSet<_> = mesh.faces.iter().map(|f| face_key(&f.vertices)).collect();
        let mut listed = HashSet::new();
        for (line, ids) in &list {
            let key = face_key(ids);
            if !actual.contains(&key) {
                return Err(parse_err(*line, format!("face {ids:?} is not a face of any cell")));
            }
            if !listed.insert(key) {
                return Err(parse_err(*line, format!("face {ids:?} listed twice")));
            }
        }
        if listed.len() != actual.len() {
            return Err(Error::Conformity(format!(
                "faces section lists {} faces, cells define {}",
                listed.len(),
                actual.len()
            )));
        }
    }
    Ok(mesh)
}

pub fn load_mesh(path: &Path) -> Result<MixedDimMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

/// Serializes a mesh; `parse_mesh` of the result rebuilds the same entities.
pub fn write_mesh_string(mesh: &MixedDimMesh) -> String {
    let mut s = String::from("mdmesh 1\npoints\n");
    for p in &mesh.points {
        if mesh.dim == 1 {
            let _ = writeln!(s, "{:?}", p[0]);
        } else {
            let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
        }
    }
    let join = |ids: &[usize]| ids.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "cells {}", mesh.dim);
    for c in &mesh.cells {
        let _ = writeln!(s, "{}", join(&c.vertices));
    }
    let _ = writeln!(s, "faces {}", mesh.dim - 1);
    let mut seen = HashSet::new();
    for f in &mesh.faces {
        if seen.insert(face_key(&f.vertices)) {
            let _ = writeln!(s, "{}", join(&f.vertices));
        }
    }
    for (tag, name) in mesh.boundary_tags.iter().enumerate() {
        let members: Vec<_> = mesh
            .faces
            .iter()
            .filter(|f| f.kind == FaceKind::Boundary { tag })
            .collect();
        if members.is_empty() {
            continue;
        }
        let _ = writeln!(s, "boundary {name}");
        for f in members {
            let _ = writeln!(s, "{}", join(&f.vertices));
        }
    }
    for (i, fr) in mesh.fractures.iter().enumerate() {
        let _ = writeln!(s, "fracture {i}");
        for c in &fr.cells {
            let _ = writeln!(s, "{}", join(&c.vertices));
        }
    }
    for (x, inter) in mesh.intersections.iter().enumerate() {
        let _ = writeln!(s, "intersection {x}\n{}", inter.vertex);
    }
    s
}

pub fn write_mesh(mesh: &MixedDimMesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_mesh_string(mesh)).map_err(|e| Error::io(path, e))
}
