//! Axis-angle rotations and their derivatives.

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Rotation matrix of an axis-angle vector.
pub fn exp(v: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*v).into_inner()
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Partial derivatives of `exp(v)` with respect to each component of `v`.
///
/// Uses dR/dv_i = (v_i [v]x + [v x (I - R) e_i]x) R / |v|^2, switching to the
/// second-order series near zero where that quotient loses precision.
pub fn exp_derivatives(v: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let n2 = v.norm_squared();
    let e = [Vector3::x(), Vector3::y(), Vector3::z()];
    if n2 < 1e-8 {
        let vx = skew(v);
        return e.map(|ei| {
            let ex = skew(&ei);
            ex + 0.5 * (ex * vx + vx * ex)
        });
    }
    let r = exp(v);
    let vx = skew(v);
    let i_minus_r = Matrix3::identity() - r;
    e.map(|ei| (vx * ei.dot(v) + skew(&v.cross(&(i_minus_r * ei)))) * r / n2)
}
