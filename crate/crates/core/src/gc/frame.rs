use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::Skeleton;
use crate::mesh::shapes::least_aligned_axis;

/// Right-handed orthonormal section frame: `x × y = t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x: Vector3<f64>,
    pub y: Vector3<f64>,
    pub t: Vector3<f64>,
}

impl Frame {
    /// Frame with tangent `t` whose x-axis is `reference` projected onto the
    /// plane normal to `t`. Falls back to the global axis least aligned with
    /// `t` when the reference is (nearly) parallel to it.
    pub fn seeded(t: Vector3<f64>, reference: Option<Vector3<f64>>) -> Frame {
        let t = t.normalize();
        let project = |r: Vector3<f64>| (r - t * r.dot(&t)).try_normalize(1e-6);
        let x = reference
            .and_then(project)
            .or_else(|| project(least_aligned_axis(&t)))
            .expect("least aligned axis is never parallel");
        Frame {
            x,
            y: t.cross(&x),
            t,
        }
    }

    /// Parallel transport onto a new tangent by the minimal rotation.
    pub fn transport(&self, new_t: &Vector3<f64>) -> Frame {
        let new_t = new_t.normalize();
        let rot = Rotation3::rotation_between(&self.t, &new_t)
            .unwrap_or_else(|| Rotation3::from_axis_angle(&Unit::new_unchecked(self.x), std::f64::consts::PI));
        let x = rot * self.x;
        let x = (x - new_t * x.dot(&new_t)).normalize();
        Frame {
            x,
            y: new_t.cross(&x),
            t: new_t,
        }
    }

    /// Frame moved from height `from` to height `to` along the skeleton,
    /// stepping through every polyline vertex in between.
    pub fn transport_along(&self, skeleton: &Skeleton, from: f64, to: f64) -> Frame {
        let mut frame = *self;
        for h in skeleton.vertices_between(from, to) {
            frame = frame.transport(&skeleton.tangent_at(h));
        }
        frame.transport(&skeleton.tangent_at(to))
    }

    /// Local coordinates of `v` in this frame.
    pub fn to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(v.dot(&self.x), v.dot(&self.y), v.dot(&self.t))
    }
}

/// Rotation-minimizing frames at the given increasing heights, seeded at the
/// first height.
pub fn frames_at(skeleton: &Skeleton, heights: &[f64], reference: Option<Vector3<f64>>) -> Vec<Frame> {
    let mut out: Vec<Frame> = Vec::with_capacity(heights.len());
    for (i, &h) in heights.iter().enumerate() {
        let f = match out.last() {
            None => Frame::seeded(skeleton.tangent_at(h), reference),
            Some(prev) => prev.transport_along(skeleton, heights[i - 1], h),
        };
        out.push(f);
    }
    out
}
