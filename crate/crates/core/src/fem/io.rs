//! Mesh files and solution dumps.
//!
//! Text mesh (`.mesh`):
//!
//! ```text
//! homolab-mesh 1
//! vertices <nv>
//! <x> <y>                      (nv lines)
//! triangles <nt>
//! <i> <j> <k>                  (nt lines, counterclockwise, 0-based)
//! boundary_edges <nb>
//! <i> <j> <piece> <t0> <t1>    (nb lines, domain on the left)
//! ```
//!
//! Binary mesh (`.hlmesh`), little-endian: magic `HLMESH01`, then
//! `u64 nv, u64 nt, u64 nb`, `nv × 2 f64`, `nt × 3 u32`, and
//! `nb × (u32 i, u32 j, u32 piece, f64 t0, f64 t1)`.
//!
//! Solution dump: `<stem>.bin` holds `n_vertices × m` f64 little-endian
//! values (vertex-major) and `<stem>.json` the [`DumpMeta`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mesh::{BoundaryEdge, TriMesh};
use super::solve::FieldOnMesh;
use crate::error::{HomolabError, Result};

const MAGIC: &[u8; 8] = b"HLMESH01";

fn bad(msg: impl Into<String>) -> HomolabError {
    HomolabError::Config(format!("malformed mesh file: {}", msg.into()))
}

fn finish(mut mesh: TriMesh) -> Result<TriMesh> {
    let nv = mesh.vertices.len() as u32;
    let out_of_range = mesh.triangles.iter().flatten().chain(mesh.boundary_edges.iter().flat_map(|e| e.v.iter())).any(|&i| i >= nv);
    if out_of_range {
        return Err(bad("vertex index out of range"));
    }
    mesh.h = mesh.longest_edge();
    mesh.h_target = mesh.h;
    mesh.validate()?;
    Ok(mesh)
}

pub fn mesh_to_text(mesh: &TriMesh) -> String {
    let mut s = String::from("homolab-mesh 1\n");
    let _ = writeln!(s, "vertices {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:e} {:e}", v[0], v[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "boundary_edges {}", mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let _ = writeln!(s, "{} {} {} {:e} {:e}", e.v[0], e.v[1], e.piece, e.t[0], e.t[1]);
    }
    s
}

pub fn mesh_from_text(text: &str) -> Result<TriMesh> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    if lines.next() != Some("homolab-mesh 1") {
        return Err(bad("missing 'homolab-mesh 1' header"));
    }
    let mut rows = |count: usize, width: usize| -> Result<Vec<Vec<&str>>> {
        (0..count)
            .map(|_| {
                let l = lines.next().ok_or_else(|| bad("unexpected end of file"))?;
                let parts: Vec<&str> = l.split_whitespace().collect();
                if parts.len() != width {
                    return Err(bad(format!("expected {width} fields in '{l}'")));
                }
                Ok(parts)
            })
            .collect()
    };
    let count = |row: &[&str], name: &str| -> Result<usize> {
        match row {
            [n, c] if *n == name => c.parse().map_err(|_| bad(format!("bad {name} count"))),
            _ => Err(bad(format!("expected '{name} <count>'"))),
        }
    };
    let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'")));
    let parse_u = |s: &str| s.parse::<u32>().map_err(|_| bad(format!("bad index '{s}'")));
    let nv = count(&rows(1, 2)?[0], "vertices")?;
    let vertices = rows(nv, 2)?.iter().map(|p| Ok([parse_f(p[0])?, parse_f(p[1])?])).collect::<Result<Vec<_>>>()?;
    let nt = count(&rows(1, 2)?[0], "triangles")?;
    let triangles = rows(nt, 3)?.iter().map(|p| Ok([parse_u(p[0])?, parse_u(p[1])?, parse_u(p[2])?])).collect::<Result<Vec<_>>>()?;
    let nb = count(&rows(1, 2)?[0], "boundary_edges")?;
    let boundary_edges = rows(nb, 5)?
        .iter()
        .map(|p| Ok(BoundaryEdge { v: [parse_u(p[0])?, parse_u(p[1])?], piece: parse_u(p[2])?, t: [parse_f(p[3])?, parse_f(p[4])?] }))
        .collect::<Result<Vec<_>>>()?;
    finish(TriMesh { vertices, triangles, boundary_edges, ..Default::default() })
}

pub fn mesh_to_binary(mesh: &TriMesh) -> Vec<u8> {
    let mut b = Vec::with_capacity(32 + mesh.vertices.len() * 16 + mesh.triangles.len() * 12 + mesh.boundary_edges.len() * 28);
    b.extend_from_slice(MAGIC);
    for n in [mesh.vertices.len(), mesh.triangles.len(), mesh.boundary_edges.len()] {
        b.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in &mesh.vertices {
        b.extend_from_slice(&v[0].to_le_bytes());
        b.extend_from_slice(&v[1].to_le_bytes());
    }
    for t in &mesh.triangles {
        t.iter().for_each(|i| b.extend_from_slice(&i.to_le_bytes()));
    }
    for e in &mesh.boundary_edges {
        b.extend_from_slice(&e.v[0].to_le_bytes());
        b.extend_from_slice(&e.v[1].to_le_bytes());
        b.extend_from_slice(&e.piece.to_le_bytes());
        b.extend_from_slice(&e.t[0].to_le_bytes());
        b.extend_from_slice(&e.t[1].to_le_bytes());
    }
    b
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.0.len() < N {
            return Err(bad("truncated binary mesh"));
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("split at N"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn mesh_from_binary(bytes: &[u8]) -> Result<TriMesh> {
    let mut c = Cursor(bytes);
    if &c.take::<8>()? != MAGIC {
        return Err(bad("bad magic"));
    }
    let (nv, nt, nb) = (c.u64()? as usize, c.u64()? as usize, c.u64()? as usize);
    let need = nv * 16 + nt * 12 + nb * 28;
    if c.0.len() != need {
        return Err(bad(format!("expected {need} payload bytes, found {}", c.0.len())));
    }
    let vertices = (0..nv).map(|_| Ok([c.f64()?, c.f64()?])).collect::<Result<Vec<_>>>()?;
    let triangles = (0..nt).map(|_| Ok([c.u32()?, c.u32()?, c.u32()?])).collect::<Result<Vec<_>>>()?;
    let boundary_edges = (0..nb)
        .map(|_| Ok(BoundaryEdge { v: [c.u32()?, c.u32()?], piece: c.u32()?, t: [c.f64()?, c.f64()?] }))
        .collect::<Result<Vec<_>>>()?;
    finish(TriMesh { vertices, triangles, boundary_edges, ..Default::default() })
}

/// Writes text or binary by extension (`.hlmesh` is binary).
pub fn write_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    if path.extension().is_some_and(|e| e == "hlmesh") {
        file.write_all(&mesh_to_binary(mesh))?;
    } else {
        file.write_all(mesh_to_text(mesh).as_bytes())?;
    }
    Ok(())
}

/// Reads either format, detected by the magic bytes. Loaded meshes carry
/// no chart and a single multigrid level.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let bytes = crate::error::read_file(path)?;
    if bytes.starts_with(MAGIC) {
        mesh_from_binary(&bytes)
    } else {
        mesh_from_text(std::str::from_utf8(&bytes).map_err(|_| bad("not UTF-8 text"))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    pub schema: String,
    pub name: String,
    pub eps: Option<f64>,
    pub h: f64,
    pub n_vertices: usize,
    pub components: usize,
    pub norms: BTreeMap<String, f64>,
}

pub const DUMP_SCHEMA: &str = "homolab.dump/1";

/// Writes `<stem>.bin` and `<stem>.json`, returning both paths.
pub fn write_dump(
    field: &FieldOnMesh,
    stem: &Path,
    name: &str,
    eps: Option<f64>,
    norms: BTreeMap<String, f64>,
) -> Result<(PathBuf, PathBuf)> {
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    let mut bytes = Vec::with_capacity(field.values.len() * 8);
    field.values.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
    std::fs::write(&bin, bytes)?;
    let meta = DumpMeta {
        schema: DUMP_SCHEMA.into(),
        name: name.into(),
        eps,
        h: field.mesh.h,
        n_vertices: field.mesh.n_vertices(),
        components: field.m,
        norms,
    };
    std::fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
    Ok((bin, json))
}

pub fn read_dump_values(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(HomolabError::Config(format!("dump {} is not a whole number of f64 values", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::mesh::mesh_domain;
    use crate::geometry::SurfaceChart;

    fn strip(m: &TriMesh) -> (Vec<[f64; 2]>, Vec<[u32; 3]>, Vec<BoundaryEdge>) {
        (m.vertices.clone(), m.triangles.clone(), m.boundary_edges.clone())
    }

    #[test]
    fn text_and_binary_roundtrip() {
        let mesh = mesh_domain(&SurfaceChart::ellipse(2.0, 1.0).unwrap(), 0.2).unwrap();
        let text = mesh_from_text(&mesh_to_text(&mesh)).unwrap();
        assert_eq!(strip(&text), strip(&mesh));
        let bin = mesh_from_binary(&mesh_to_binary(&mesh)).unwrap();
        assert_eq!(strip(&bin), strip(&mesh));
        assert!(bin.hierarchy.is_empty() && bin.surface.is_none());
    }

    #[test]
    fn files_and_dumps() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = mesh_domain(&SurfaceChart::circle(1.0).unwrap(), 0.25).unwrap();
        for name in ["m.mesh", "m.hlmesh"] {
            let p = dir.path().join(name);
            write_mesh(&mesh, &p).unwrap();
            assert_eq!(strip(&read_mesh(&p).unwrap()), strip(&mesh));
        }
        let f = FieldOnMesh::interpolate(Arc::new(mesh), 1, |x, o| o[0] = x[0]);
        let (bin, json) = write_dump(&f, &dir.path().join("u"), "u", Some(0.5), BTreeMap::new()).unwrap();
        assert_eq!(read_dump_values(&bin).unwrap(), f.values);
        let meta: DumpMeta = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(meta.n_vertices, f.mesh.n_vertices());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(mesh_from_text("nope").is_err());
        assert!(mesh_from_text("homolab-mesh 1\nvertices 1\n0 0\ntriangles 1\n0 1 2\nboundary_edges 0\n").is_err());
        assert!(mesh_from_binary(b"HLMESH01\x01").is_err());
    }
}
