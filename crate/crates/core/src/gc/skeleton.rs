use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SEGMENT: f64 = 1e-6;

/// Polyline skeleton of a part, parameterized by arc length `h ∈ [0, H]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonFile", into = "SkeletonFile")]
pub struct Skeleton {
    points: Vec<Point3<f64>>,
    arc: Vec<f64>,
    vertex_tangents: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkeletonFile {
    points: Vec<[f64; 3]>,
}

impl TryFrom<SkeletonFile> for Skeleton {
    type Error = Error;

    fn try_from(file: SkeletonFile) -> Result<Self> {
        Skeleton::new(file.points.iter().map(|p| Point3::from(*p)).collect())
    }
}

impl From<Skeleton> for SkeletonFile {
    fn from(s: Skeleton) -> Self {
        SkeletonFile {
            points: s.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }
}

impl Skeleton {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Skeleton> {
        if points.len() < 2 {
            return Err(Error::Invalid("skeleton needs at least two points".into()));
        }
        if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Invalid("skeleton has non-finite coordinates".into()));
        }
        let mut arc = Vec::with_capacity(points.len());
        arc.push(0.0);
        for (i, w) in points.windows(2).enumerate() {
            let len = (w[1] - w[0]).norm();
            if !(len > MIN_SEGMENT) {
                return Err(Error::Invalid(format!(
                    "skeleton points {i} and {} coincide",
                    i + 1
                )));
            }
            arc.push(arc[i] + len);
        }
        let n = points.len();
        let seg_dir = |i: usize| (points[i + 1] - points[i]).normalize();
        let vertex_tangents = (0..n)
            .map(|i| {
                let t = match i {
                    0 => seg_dir(0),
                    i if i == n - 1 => seg_dir(n - 2),
                    i => seg_dir(i - 1) + seg_dir(i),
                };
                // A full reversal has no average direction; keep the incoming one.
                t.try_normalize(1e-12).unwrap_or_else(|| seg_dir(i.saturating_sub(1)))
            })
            .collect();
        Ok(Skeleton {
            points,
            arc,
            vertex_tangents,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Skeleton> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Cumulative arc length at each point.
    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc
    }

    /// Total length `H`.
    pub fn height(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Segment index and local fraction for height `h` (clamped to `[0, H]`).
    pub fn locate(&self, h: f64) -> (usize, f64) {
        let h = h.clamp(0.0, self.height());
        let seg = self
            .arc
            .partition_point(|&a| a <= h)
            .saturating_sub(1)
            .min(self.points.len() - 2);
        let len = self.arc[seg + 1] - self.arc[seg];
        (seg, ((h - self.arc[seg]) / len).clamp(0.0, 1.0))
    }

    pub fn point_at(&self, h: f64) -> Point3<f64> {
        let (seg, t) = self.locate(h);
        self.points[seg] + (self.points[seg + 1] - self.points[seg]) * t
    }

    /// Unit tangent, interpolated between vertex tangents so it varies
    /// continuously with `h`.
    pub fn tangent_at(&self, h: f64) -> Vector3<f64> {
        let (seg, t) = self.locate(h);
        let a = self.vertex_tangents[seg];
        let b = self.vertex_tangents[seg + 1];
        (a * (1.0 - t) + b * t)
            .try_normalize(1e-12)
            .unwrap_or_else(|| (self.points[seg + 1] - self.points[seg]).normalize())
    }

    /// Heights of interior polyline vertices strictly between `a` and `b`,
    /// in order from `a` towards `b`.
    pub fn vertices_between(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut hs: Vec<f64> = self.arc[1..self.arc.len() - 1]
            .iter()
            .copied()
            .filter(|&h| h > lo && h < hi)
            .collect();
        if a > b {
            hs.reverse();
        }
        hs
    }

    /// Height of the skeleton point nearest to `p`, and its distance.
    pub fn closest_param(&self, p: &Point3<f64>) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let e = self.points[i + 1] - a;
            let t = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
            let d = (a + e * t - p).norm();
            if d < best.1 {
                best = (self.arc[i] + t * (self.arc[i + 1] - self.arc[i]), d);
            }
        }
        best
    }

    /// Closest approach between the ray `origin + s·dir` (`s ≥ 0`) and the
    /// skeleton: returns the skeleton height and the gap distance.
    pub fn closest_to_ray(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> (f64, f64) {
        let d = dir.normalize();
        let mut best = (0.0, f64::INFINITY);
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let e = self.points[i + 1] - a;
            let (t, dist) = ray_segment(origin, &d, &a, &e);
            if dist < best.1 {
                best = (self.arc[i] + t * (self.arc[i + 1] - self.arc[i]), dist);
            }
        }
        best
    }
}

/// Minimizes |o + s d − (a + t e)| over s ≥ 0, t ∈ [0, 1]; returns (t, distance).
fn ray_segment(o: &Point3<f64>, d: &Vector3<f64>, a: &Point3<f64>, e: &Vector3<f64>) -> (f64, f64) {
    let dist = |s: f64, t: f64| (o + d * s - (a + e * t)).norm();
    let r = o - a;
    let (dd, de, ee) = (d.dot(d), d.dot(e), e.dot(e));
    let (dr, er) = (d.dot(&r), e.dot(&r));
    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(4);

    let det = dd * ee - de * de;
    if det > 1e-14 * dd * ee {
        // Stationary point of the unconstrained quadratic.
        let s = (de * er - ee * dr) / det;
        let t = (dd * er - de * dr) / det;
        if s >= 0.0 && (0.0..=1.0).contains(&t) {
            candidates.push((s, t));
        }
    }
    // s = 0: ray origin against the segment.
    candidates.push((0.0, (er / ee).clamp(0.0, 1.0)));
    // t = 0 and t = 1: segment endpoints against the ray.
    candidates.push(((-dr / dd).max(0.0), 0.0));
    let rb = o - (a + e);
    candidates.push(((-d.dot(&rb) / dd).max(0.0), 1.0));

    candidates
        .into_iter()
        .map(|(s, t)| (t, dist(s, t)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
}
