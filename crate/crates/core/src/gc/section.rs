//! Closed 2D contours: measures, resampling and abstraction.

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Loop2 = Vec<Point2<f64>>;

/// Knobs of [`abstract_section`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractionParams {
    /// Laplacian smoothing weight of the single smoothing pass.
    pub smoothing_weight: f64,
    /// Concavities deeper than this fraction of the mean radius are bridged.
    pub concavity_threshold: f64,
    /// Resampling density before smoothing.
    pub dense_points: usize,
}

impl Default for AbstractionParams {
    fn default() -> Self {
        AbstractionParams {
            smoothing_weight: 0.5,
            concavity_threshold: 0.15,
            dense_points: 256,
        }
    }
}

/// Shoelace area; positive for counterclockwise loops.
pub fn signed_area(lp: &[Point2<f64>]) -> f64 {
    let n = lp.len();
    (0..n)
        .map(|i| {
            let (a, b) = (lp[i], lp[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

pub fn perimeter(lp: &[Point2<f64>]) -> f64 {
    let n = lp.len();
    (0..n).map(|i| (lp[(i + 1) % n] - lp[i]).norm()).sum()
}

/// Area centroid, or the vertex mean for (near) zero-area loops.
pub fn centroid(lp: &[Point2<f64>]) -> Point2<f64> {
    let n = lp.len();
    let area = signed_area(lp);
    let mean = lp.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords) / n as f64;
    if area.abs() < 1e-12 * perimeter(lp).powi(2).max(1e-300) {
        return Point2::from(mean);
    }
    let mut c = Vector2::zeros();
    for i in 0..n {
        let (a, b) = (lp[i], lp[(i + 1) % n]);
        let cross = a.x * b.y - b.x * a.y;
        c += (a.coords + b.coords) * cross;
    }
    Point2::from(c / (6.0 * area))
}

/// Even-odd point-in-polygon test.
pub fn contains(lp: &[Point2<f64>], q: &Point2<f64>) -> bool {
    let n = lp.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (lp[i], lp[j]);
        if (a.y > q.y) != (b.y > q.y) && q.x < (b.x - a.x) * (q.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Mean distance of the loop from its centroid, by arc length.
pub fn mean_radius(lp: &[Point2<f64>]) -> f64 {
    let c = centroid(lp);
    let n = lp.len();
    let mut total = 0.0;
    let mut len = 0.0;
    for i in 0..n {
        let (a, b) = (lp[i], lp[(i + 1) % n]);
        let l = (b - a).norm();
        total += l * ((a - c).norm() + (b - c).norm()) / 2.0;
        len += l;
    }
    if len > 0.0 {
        total / len
    } else {
        0.0
    }
}

pub fn make_ccw(lp: &mut Loop2) {
    if signed_area(lp) < 0.0 {
        lp.reverse();
    }
}

/// `count` points spaced uniformly by arc length, starting at `lp[0]`.
pub fn resample(lp: &[Point2<f64>], count: usize) -> Loop2 {
    let n = lp.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        cum.push(cum[i] + (lp[(i + 1) % n] - lp[i]).norm());
    }
    let total = cum[n];
    if total <= 0.0 {
        return vec![lp[0]; count];
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = total * k as f64 / count as f64;
        while seg + 1 < n && cum[seg + 1] <= s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(lp[seg] + (lp[(seg + 1) % n] - lp[seg]) * t);
    }
    out
}

/// One pass of Laplacian smoothing where each neighbor is weighted by the
/// inverse length of the edge to it.
pub fn smooth(lp: &[Point2<f64>], weight: f64) -> Loop2 {
    let n = lp.len();
    (0..n)
        .map(|i| {
            let (p, a, b) = (lp[i], lp[(i + n - 1) % n], lp[(i + 1) % n]);
            let (la, lb) = ((a - p).norm(), (b - p).norm());
            if la <= 0.0 || lb <= 0.0 {
                return p;
            }
            let (wa, wb) = (1.0 / la, 1.0 / lb);
            let avg = (a.coords * wa + b.coords * wb) / (wa + wb);
            p + (avg - p.coords) * weight
        })
        .collect()
}

/// Indices of the convex hull vertices, increasing (loop order for a simple
/// counterclockwise loop).
fn hull_indices(lp: &[Point2<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lp.len()).collect();
    idx.sort_by(|&a, &b| {
        lp[a].x.total_cmp(&lp[b].x).then(lp[a].y.total_cmp(&lp[b].y))
    });
    let cross = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (lp[o], lp[a], lp[b]);
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(idx.iter())
        } else {
            Box::new(idx.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull.sort_unstable();
    hull.dedup();
    hull
}

/// A concave pocket: the loop runs from hull vertex `start` to hull vertex
/// `end` (cyclically) away from the chord, reaching `depth` at most.
#[derive(Debug, Clone, Copy)]
struct Pocket {
    start: usize,
    end: usize,
    depth: f64,
}

fn pockets(lp: &[Point2<f64>]) -> Vec<Pocket> {
    let n = lp.len();
    let hull = hull_indices(lp);
    let mut out = Vec::new();
    if hull.len() < 3 {
        return out;
    }
    for w in 0..hull.len() {
        let (start, end) = (hull[w], hull[(w + 1) % hull.len()]);
        let span = (end + n - start) % n;
        if span < 2 {
            continue;
        }
        let (a, b) = (lp[start], lp[end]);
        let chord = b - a;
        let len = chord.norm();
        let mut depth: f64 = 0.0;
        for k in 1..span {
            let p = lp[(start + k) % n];
            let d = if len > 0.0 {
                ((p - a).x * chord.y - (p - a).y * chord.x).abs() / len
            } else {
                (p - a).norm()
            };
            depth = depth.max(d);
        }
        out.push(Pocket { start, end, depth });
    }
    out
}

/// Deepest pocket between the loop and its convex hull.
pub fn convex_deficiency(lp: &[Point2<f64>]) -> f64 {
    pockets(lp).iter().map(|p| p.depth).fold(0.0, f64::max)
}

/// Replaces every pocket deeper than `max_depth` by its chord.
pub fn bridge_concavities(lp: &[Point2<f64>], max_depth: f64) -> Loop2 {
    let n = lp.len();
    let mut keep = vec![true; n];
    for p in pockets(lp) {
        if p.depth >= max_depth {
            let span = (p.end + n - p.start) % n;
            for k in 1..span {
                keep[(p.start + k) % n] = false;
            }
        }
    }
    lp.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

/// Abstracts the contours of one cross-section into a single simple
/// counterclockwise loop: keeps the outermost contour (filling holes),
/// smooths it once, and bridges deep concavities.
pub fn abstract_section(loops: &[Loop2], params: &AbstractionParams) -> Result<Loop2> {
    let outer = loops
        .iter()
        .filter(|l| l.len() >= 3)
        .max_by(|a, b| signed_area(a).abs().total_cmp(&signed_area(b).abs()))
        .ok_or_else(|| Error::Invalid("cross-section loop needs at least 3 points".into()))?;
    let mut lp = outer.clone();
    make_ccw(&mut lp);
    let per = perimeter(&lp);
    if !(per > 1e-9) {
        return Err(Error::DegenerateLoop);
    }
    let dense = resample(&lp, params.dense_points.max(lp.len()));
    let smoothed = smooth(&dense, params.smoothing_weight);
    let radius = mean_radius(&smoothed);
    let bridged = bridge_concavities(&smoothed, params.concavity_threshold * radius);
    let area = signed_area(&bridged);
    if !(area > 1e-6 * perimeter(&bridged).powi(2)) {
        return Err(Error::DegenerateLoop);
    }
    Ok(bridged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn circle(r: f64, n: usize) -> Loop2 {
        (0..n)
            .map(|i| {
                let a = TAU * i as f64 / n as f64;
                Point2::new(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    /// Circle of radius `r` with one rectangular-ish notch of the given depth
    /// cut into it around angle 0.
    fn notched(r: f64, depth: f64, n: usize) -> Loop2 {
        (0..n)
            .map(|i| {
                let a = TAU * i as f64 / n as f64;
                let dist = a.min(TAU - a);
                let rr = if dist < 0.3 { r - depth } else { r };
                Point2::new(rr * a.cos(), rr * a.sin())
            })
            .collect()
    }

    fn radial_error(lp: &[Point2<f64>], r: f64) -> f64 {
        lp.iter().map(|p| (p.coords.norm() - r).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn measures_of_square() {
        let sq = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ];
        assert_eq!(signed_area(&sq), 4.0);
        assert_eq!(perimeter(&sq), 8.0);
        assert_eq!(centroid(&sq), Point2::new(1.0, 1.0));
        assert!(contains(&sq, &Point2::new(1.0, 0.5)));
        assert!(!contains(&sq, &Point2::new(3.0, 0.5)));
        let rs = resample(&sq, 8);
        assert_eq!(rs[1], Point2::new(1.0, 0.0));
        assert_eq!(rs[5], Point2::new(1.0, 2.0));
    }

    #[test]
    fn circle_is_a_fixed_point() {
        let c = circle(2.0, 400);
        let out = abstract_section(&[c], &AbstractionParams::default()).unwrap();
        assert!(radial_error(&out, 2.0) < 1e-3 * 2.0);
        assert!(signed_area(&out) > 0.0);
    }

    #[test]
    fn clockwise_input_comes_out_counterclockwise() {
        let mut c = circle(1.0, 64);
        c.reverse();
        let out = abstract_section(&[c], &AbstractionParams::default()).unwrap();
        assert!(signed_area(&out) > 0.0);
    }

    #[test]
    fn annulus_keeps_outer_loop() {
        let mut inner = circle(0.5, 64);
        inner.reverse();
        let out = abstract_section(&[inner, circle(1.5, 64)], &AbstractionParams::default()).unwrap();
        assert!(radial_error(&out, 1.5) < 0.01);
    }

    #[test]
    fn deep_notch_is_bridged() {
        let lp = notched(1.0, 0.3, 512);
        assert!(convex_deficiency(&lp) > 0.25);
        let out = abstract_section(&[lp], &AbstractionParams::default()).unwrap();
        let r = mean_radius(&out);
        assert!(convex_deficiency(&out) < 0.15 * r, "{}", convex_deficiency(&out));
    }

    #[test]
    fn shallow_notch_survives() {
        let lp = notched(1.0, 0.08, 512);
        let out = abstract_section(&[lp], &AbstractionParams::default()).unwrap();
        assert!(convex_deficiency(&out) > 0.04);
    }

    #[test]
    fn degenerate_loop_is_an_error() {
        let sliver = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 1e-9)];
        assert!(matches!(
            abstract_section(&[sliver], &AbstractionParams::default()),
            Err(Error::DegenerateLoop)
        ));
        let point = vec![Point2::new(1.0, 1.0); 4];
        assert!(matches!(
            abstract_section(&[point], &AbstractionParams::default()),
            Err(Error::DegenerateLoop)
        ));
    }

    proptest! {
        #[test]
        fn abstraction_is_ccw_and_bounded(
            radii in prop::collection::vec(0.5f64..1.5, 12..40),
            scale in 0.1f64..10.0,
        ) {
            let n = radii.len();
            let lp: Loop2 = radii
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let a = TAU * i as f64 / n as f64;
                    Point2::new(scale * r * a.cos(), scale * r * a.sin())
                })
                .collect();
            let out = abstract_section(std::slice::from_ref(&lp), &AbstractionParams::default()).unwrap();
            prop_assert!(signed_area(&out) > 0.0);
            prop_assert!(convex_deficiency(&out) < 0.15 * mean_radius(&out) + 1e-9);
            // Smoothing and bridging never leave the input's convex hull.
            let hull: Loop2 = hull_indices(&lp).into_iter().map(|i| lp[i]).collect();
            for p in &out {
                let inside = contains(&hull, p)
                    || hull.iter().any(|h| (h - p).norm() < 1e-9 * scale);
                let near = (0..hull.len()).any(|i| {
                    let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
                    let e = b - a;
                    let t = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                    (a + e * t - p).norm() < 1e-9 * scale
                });
                prop_assert!(inside || near);
            }
        }
    }
}
