//! Plane/mesh intersection into closed 2D contours.

use std::collections::{HashMap, HashSet};

use nalgebra::{Point2, Point3};

use super::Frame;
use crate::mesh::TriMesh;

type EdgeKey = (usize, usize);

fn key(a: usize, b: usize) -> EdgeKey {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, Default)]
pub struct Slice {
    /// Contours in frame coordinates (x, y) relative to the plane origin.
    pub loops: Vec<Vec<Point2<f64>>>,
    /// Open chains that were closed by joining their endpoints.
    pub auto_closed: usize,
}

/// Intersects `mesh` with the plane through `origin` normal to `frame.t`.
/// Vertices on the plane (within rounding of the mesh scale) count as lying
/// on the positive side, so every crossing edge is strictly split, faces
/// coplanar with the plane are skipped, and shared edges produce the same
/// point for both adjacent faces.
pub fn slice_mesh(mesh: &TriMesh, origin: &Point3<f64>, frame: &Frame) -> Slice {
    let verts = mesh.vertices();
    let eps = 1e-9 * mesh.aabb().diagonal();
    let dist: Vec<f64> = verts
        .iter()
        .map(|v| {
            let d = (v - origin).dot(&frame.t);
            if d.abs() <= eps {
                0.0
            } else {
                d
            }
        })
        .collect();
    let pos = |i: usize| dist[i] >= 0.0;

    let mut points: HashMap<EdgeKey, Point2<f64>> = HashMap::new();
    let mut next: HashMap<EdgeKey, EdgeKey> = HashMap::new();
    let mut crossing = |a: usize, b: usize| -> EdgeKey {
        let k = key(a, b);
        points.entry(k).or_insert_with(|| {
            let (i, j) = k;
            let t = dist[i] / (dist[i] - dist[j]);
            let p = verts[i] + (verts[j] - verts[i]) * t - origin;
            Point2::new(p.dot(&frame.x), p.dot(&frame.y))
        });
        k
    };

    for f in mesh.faces() {
        let s = [pos(f[0]), pos(f[1]), pos(f[2])];
        if s[0] == s[1] && s[1] == s[2] {
            continue;
        }
        let mut enter = None;
        let mut leave = None;
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            match (s[e], s[(e + 1) % 3]) {
                (false, true) => enter = Some(crossing(a, b)),
                (true, false) => leave = Some(crossing(a, b)),
                _ => {}
            }
        }
        if let (Some(a), Some(b)) = (enter, leave) {
            next.insert(a, b);
        }
    }

    let mut out = Slice::default();
    let mut used: HashSet<EdgeKey> = HashSet::new();
    let targets: HashSet<EdgeKey> = next.values().copied().collect();
    let mut starts: Vec<EdgeKey> = next.keys().filter(|k| !targets.contains(k)).copied().collect();
    starts.sort_unstable();
    let open_count = starts.len();
    let mut rest: Vec<EdgeKey> = next.keys().copied().collect();
    rest.sort_unstable();
    starts.extend(rest);

    for (n, start) in starts.into_iter().enumerate() {
        if used.contains(&start) {
            continue;
        }
        let mut chain = vec![start];
        used.insert(start);
        let mut cur = start;
        while let Some(&nx) = next.get(&cur) {
            if nx == start || !used.insert(nx) {
                break;
            }
            chain.push(nx);
            cur = nx;
        }
        if n < open_count {
            out.auto_closed += 1;
        }
        let mut pts: Vec<Point2<f64>> = Vec::with_capacity(chain.len());
        for k in chain {
            let p = points[&k];
            if pts.last().is_none_or(|q: &Point2<f64>| (p - q).norm() > 1e-12) {
                pts.push(p);
            }
        }
        while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() <= 1e-12 {
            pts.pop();
        }
        if pts.len() >= 3 {
            out.loops.push(pts);
        }
    }
    if out.auto_closed > 0 {
        log::warn!("plane slice closed {} open contour(s)", out.auto_closed);
    }
    out
}
