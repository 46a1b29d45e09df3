//! Minimal Wavefront OBJ reader/writer (positions and faces only).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::{triangle_area, TriMesh, DEGENERATE_AREA};
use crate::error::{Error, Result};

/// A parsed OBJ file plus the non-fatal findings made while loading it.
#[derive(Debug, Clone)]
pub struct ObjFile {
    pub mesh: TriMesh,
    /// Edges shared by more than two faces.
    pub non_manifold_edges: usize,
    /// Zero-area triangles (after fan triangulation) that were skipped.
    pub dropped_degenerate: usize,
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<ObjFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let obj = parse_obj(&text)?;
    if obj.non_manifold_edges > 0 {
        log::warn!(
            "{}: {} non-manifold edge(s)",
            path.display(),
            obj.non_manifold_edges
        );
    }
    Ok(obj)
}

/// Parses `v` and `f` records. Polygons are fan-triangulated; `vn`/`vt`
/// records are ignored because normals are recomputed.
pub fn parse_obj(text: &str) -> Result<ObjFile> {
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut dropped_degenerate = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad coordinate {t:?}"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Parse {
                        line,
                        message: "vertex needs three finite coordinates".into(),
                    });
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| resolve_index(t, vertices.len(), line))
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        message: "face needs at least three vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    let tri = [idx[0], idx[k], idx[k + 1]];
                    let area = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
                    if area < DEGENERATE_AREA {
                        dropped_degenerate += 1;
                    } else {
                        faces.push(tri);
                    }
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(Error::Invalid("OBJ contains no faces".into()));
    }
    let mesh = TriMesh::new(vertices, faces)?;
    let non_manifold_edges = mesh.non_manifold_edge_count();
    Ok(ObjFile {
        mesh,
        non_manifold_edges,
        dropped_degenerate,
    })
}

fn resolve_index(token: &str, n_vertices: usize, line: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad face index {token:?}"),
    })?;
    let resolved = match raw {
        0 => {
            return Err(Error::Parse {
                line,
                message: "face index 0 is invalid (OBJ indices are 1-based)".into(),
            })
        }
        r if r > 0 => r - 1,
        r => n_vertices as i64 + r,
    };
    if resolved < 0 || resolved as usize >= n_vertices {
        return Err(Error::Parse {
            line,
            message: format!("face index {raw} out of range ({n_vertices} vertices so far)"),
        });
    }
    Ok(resolved as usize)
}

/// Renders a mesh as OBJ text. Output is deterministic for a given mesh.
pub fn obj_string(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(mesh.vertices().len() * 40 + mesh.faces().len() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}
