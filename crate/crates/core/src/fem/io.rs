//! Plain-text mesh files.
//!
//! `<stem>.nodes` holds `index x y` lines, `<stem>.elements` holds
//! `index v0 v1 v2 tag` lines and `<stem>.json` holds boundary edges and
//! periodic pairs. Floats use the shortest round-trip representation, so
//! the same mesh always produces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::mesh::{BoundaryEdge, Region, TriMesh};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    boundary_edges: Vec<BoundaryEdge>,
    periodic_pairs: Vec<(usize, usize)>,
}

fn region_tag(r: Region) -> &'static str {
    match r {
        Region::Material => "material",
        Region::Hole => "hole",
    }
}

pub fn write_mesh(mesh: &TriMesh, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut nodes = String::new();
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(nodes, "{i} {:?} {:?}", p[0], p[1]).unwrap();
    }
    let mut elems = String::new();
    for (i, (t, r)) in mesh.elements.iter().zip(&mesh.regions).enumerate() {
        writeln!(elems, "{i} {} {} {} {}", t[0], t[1], t[2], region_tag(*r)).unwrap();
    }
    let side = Sidecar { boundary_edges: mesh.boundary_edges.clone(), periodic_pairs: mesh.periodic_pairs.clone() };
    fs::write(dir.join(format!("{stem}.nodes")), nodes)?;
    fs::write(dir.join(format!("{stem}.elements")), elems)?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string(&side)?)?;
    Ok(())
}

fn field<'a, T: std::str::FromStr>(it: &mut impl Iterator<Item = &'a str>, what: &str, line: usize) -> Result<T> {
    it.next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Mesh(format!("{what} on line {} is missing or malformed", line + 1)))
}

pub fn read_mesh(dir: &Path, stem: &str) -> Result<TriMesh> {
    let nodes_txt = fs::read_to_string(dir.join(format!("{stem}.nodes")))?;
    let elems_txt = fs::read_to_string(dir.join(format!("{stem}.elements")))?;
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let mut nodes = Vec::new();
    for (ln, line) in nodes_txt.lines().enumerate() {
        let mut it = line.split_whitespace();
        let idx: usize = field(&mut it, "node index", ln)?;
        if idx != nodes.len() {
            return Err(Error::Mesh(format!("node indices must be consecutive (line {})", ln + 1)));
        }
        nodes.push([field(&mut it, "x", ln)?, field(&mut it, "y", ln)?]);
    }
    let mut elements = Vec::new();
    let mut regions = Vec::new();
    for (ln, line) in elems_txt.lines().enumerate() {
        let mut it = line.split_whitespace();
        let _idx: usize = field(&mut it, "element index", ln)?;
        elements.push([field(&mut it, "v0", ln)?, field(&mut it, "v1", ln)?, field(&mut it, "v2", ln)?]);
        regions.push(match it.next() {
            Some("material") => Region::Material,
            Some("hole") => Region::Hole,
            _ => return Err(Error::Mesh(format!("unknown region tag on line {}", ln + 1))),
        });
    }
    TriMesh::new(nodes, elements, regions, side.boundary_edges, side.periodic_pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::mesh_unit_cell_full;
    use crate::geometry::PerforationSpec;

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = mesh_unit_cell_full(&PerforationSpec::disk(0.25), 1.0 / 8.0).unwrap();
        write_mesh(&mesh, dir.path(), "a").unwrap();
        write_mesh(&mesh, dir.path(), "b").unwrap();
        for ext in ["nodes", "elements", "json"] {
            let a = fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
            let b = fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
            assert_eq!(a, b);
        }
        let back = read_mesh(dir.path(), "a").unwrap();
        assert_eq!(back.nodes, mesh.nodes);
        assert_eq!(back.elements, mesh.elements);
        assert_eq!(back.regions, mesh.regions);
        assert_eq!(back.periodic_pairs, mesh.periodic_pairs);
        assert_eq!(back.boundary_edges, mesh.boundary_edges);
    }
}
