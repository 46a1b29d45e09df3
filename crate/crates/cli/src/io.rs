//! File helpers shared by the commands.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use gcgrasp_core::mesh::{write_obj, TriMesh};
use gcgrasp_core::{Error, Result};

/// Pretty JSON with a trailing newline; parent directories are created.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Newline-separated face indices. Blank lines and `#` comments are skipped.
pub fn parse_part(text: &str, face_count: usize) -> Result<Vec<usize>> {
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: usize = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("expected a face index, found {line:?}"),
        })?;
        if f >= face_count {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("face {f} out of range (mesh has {face_count} faces)"),
            });
        }
        faces.push(f);
    }
    if faces.is_empty() {
        return Err(Error::Invalid("part file lists no faces".into()));
    }
    Ok(faces)
}

pub fn load_part(path: &Path, object: &TriMesh) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let faces = parse_part(&text, object.faces().len()).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    object.submesh(&faces)
}

/// Writes each point as a small octahedron, for viewing contact maps.
pub fn write_points_obj(path: &Path, points: &[Point3<f64>], size: f64) -> Result<()> {
    if points.is_empty() {
        return std::fs::write(path, "").map_err(|e| Error::io(path, e));
    }
    let dirs = [Vector3::x(), -Vector3::x(), Vector3::y(), -Vector3::y(), Vector3::z(), -Vector3::z()];
    let octa = [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]];
    let mut vertices = Vec::with_capacity(points.len() * 6);
    let mut faces = Vec::with_capacity(points.len() * 8);
    for p in points {
        let base = vertices.len();
        vertices.extend(dirs.iter().map(|d| p + d * size));
        faces.extend(octa.iter().map(|f| f.map(|i| base + i)));
    }
    write_obj(path, &TriMesh::new(vertices, faces)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn part_file_parsing() {
        assert_eq!(parse_part("0\n3 # handle\n\n2\n", 4).unwrap(), vec![0, 3, 2]);
        assert!(matches!(parse_part("0\nx\n", 4), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_part("7\n", 4), Err(Error::Parse { line: 1, .. })));
        assert!(parse_part("# nothing\n", 4).is_err());
    }

    proptest::proptest! {
        #[test]
        fn comments_and_blank_lines_do_not_change_the_part(
            faces in proptest::collection::vec(0usize..500, 1..40),
            noise in proptest::collection::vec(0u8..3, 40),
        ) {
            let text: String = faces
                .iter()
                .zip(&noise)
                .map(|(f, n)| match n {
                    0 => format!("{f}\n"),
                    1 => format!("  {f} # note\n\n"),
                    _ => format!("# {f}\n{f}\t\n"),
                })
                .collect();
            proptest::prop_assert_eq!(parse_part(&text, 500).unwrap(), faces);
        }
    }
}
