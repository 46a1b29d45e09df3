//! Rigid part registration (PCA alignment refined by point-to-point ICP),
//! used as the baseline transfer.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply, Method, TransferResult};
use crate::contact::{ContactMap, ContactPoint};
use crate::error::{Error, Result};
use crate::mesh::{sample_surface, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PregParams {
    /// Surface samples drawn from each part.
    pub samples: usize,
    pub max_iterations: usize,
    /// Relative RMS improvement below which ICP stops.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for PregParams {
    fn default() -> Self {
        PregParams {
            samples: 2000,
            max_iterations: 50,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

/// Estimated rigid motion from the source part onto the target part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub iterations: usize,
    pub rms: f64,
    /// ICP diverged and the coarse alignment was kept.
    pub diverged: bool,
}

impl Registration {
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        apply(&self.rotation, &self.translation, p)
    }
}

fn centroid(points: &[Point3<f64>]) -> Point3<f64> {
    Point3::from(points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / points.len() as f64)
}

/// Area-weighted centroid and covariance of a mesh surface, exact per
/// triangle: the integral of x x^T over a triangle is A/12 (a a^T + b b^T +
/// c c^T + s s^T) with s = a + b + c.
fn surface_moments(mesh: &TriMesh) -> (Point3<f64>, Matrix3<f64>) {
    let mut area = 0.0;
    let mut first = Vector3::zeros();
    let mut second = Matrix3::zeros();
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f).map(|p| p.coords);
        let w = mesh.face_area(f);
        let s = a + b + c;
        area += w;
        first += s * (w / 3.0);
        second += (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose()) * (w / 12.0);
    }
    let mean = first / area;
    (Point3::from(mean), second / area - mean * mean.transpose())
}

/// Principal axes as columns, largest variance first, right-handed.
fn principal_axes(cov: Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = Matrix3::from_columns(&order.map(|i| eig.eigenvectors.column(i).into_owned()));
    if axes.determinant() < 0.0 {
        axes.set_column(2, &-axes.column(2));
    }
    axes
}

fn mean_distance(points: &[Point3<f64>], mesh: &TriMesh, f: impl Fn(&Point3<f64>) -> Point3<f64> + Sync) -> f64 {
    let bvh = mesh.bvh();
    let sum: f64 = points.par_iter().map(|p| bvh.closest(&f(p), f64::INFINITY).distance).collect::<Vec<_>>().iter().sum();
    sum / points.len() as f64
}

/// Best rotation (Kabsch) taking `src` onto `dst` pairwise.
fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let (cs, cd) = (centroid(src), centroid(dst));
    let h: Matrix3<f64> = src.iter().zip(dst).map(|(a, b)| (a - cs) * (b - cd).transpose()).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v_t.transpose() * d * u.transpose();
    (r, cd.coords - r * cs.coords)
}

/// Rigid registration of `src` onto `tgt`: surface centroids and principal
/// axes are matched (trying the four proper sign choices, scored by symmetric chamfer
/// distance), then refined by ICP against the target surface.
pub fn register_parts(src: &TriMesh, tgt: &TriMesh, params: &PregParams) -> Result<Registration> {
    if params.samples < 3 || params.max_iterations == 0 {
        return Err(Error::Invalid("registration needs >= 3 samples and >= 1 iteration".into()));
    }
    let xs = sample_surface(src, params.samples, params.seed)?.points;
    let ys = sample_surface(tgt, params.samples, params.seed.wrapping_add(1))?.points;
    let (cs, cov_s) = surface_moments(src);
    let (ct, cov_t) = surface_moments(tgt);
    let (vs, vt) = (principal_axes(cov_s), principal_axes(cov_t));

    let mut coarse: Option<(f64, Matrix3<f64>, Vector3<f64>)> = None;
    for signs in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
        let r = vt * Matrix3::from_diagonal(&Vector3::from(signs)) * vs.transpose();
        let t = ct.coords - r * cs.coords;
        let score = mean_distance(&xs, tgt, |p| apply(&r, &t, p))
            + mean_distance(&ys, src, |p| Point3::from(r.transpose() * (p.coords - t)));
        // Symmetric parts tie; keep the earliest (identity-like) choice.
        if coarse.as_ref().is_none_or(|c| score < c.0 * (1.0 - 1e-9) - 1e-12) {
            coarse = Some((score, r, t));
        }
    }
    let (_, r0, t0) = coarse.expect("four candidates scored");

    let bvh = tgt.bvh();
    let rms_of = |r: &Matrix3<f64>, t: &Vector3<f64>| -> (f64, Vec<Point3<f64>>) {
        let hits: Vec<Point3<f64>> = xs.par_iter().map(|p| bvh.closest(&apply(r, t, p), f64::INFINITY).point).collect();
        let sq: f64 = xs.iter().zip(&hits).map(|(p, q)| (apply(r, t, p) - q).norm_squared()).sum();
        ((sq / xs.len() as f64).sqrt(), hits)
    };
    let (coarse_rms, mut matches) = rms_of(&r0, &t0);
    let (mut r, mut t, mut rms) = (r0, t0, coarse_rms);
    let mut rises = 0;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let (nr, nt) = kabsch(&xs, &matches);
        let (next, hits) = rms_of(&nr, &nt);
        if next > rms * (1.0 + 1e-9) + 1e-12 {
            rises += 1;
            if rises >= 3 {
                log::warn!("ICP diverged after {iterations} iterations; keeping the coarse alignment");
                return Ok(Registration {
                    rotation: r0,
                    translation: t0,
                    iterations,
                    rms: coarse_rms,
                    diverged: true,
                });
            }
        } else {
            rises = 0;
        }
        let improvement = if rms > 0.0 { (rms - next) / rms } else { 0.0 };
        (r, t, matches) = (nr, nt, hits);
        let done = next <= rms && improvement < params.tolerance;
        rms = next;
        if done {
            break;
        }
    }
    Ok(Registration {
        rotation: r,
        translation: t,
        iterations,
        rms,
        diverged: false,
    })
}

/// Baseline transfer: each contact is moved by the part registration and
/// snapped to the nearest target surface point.
pub fn transfer_preg_baseline(
    src_map: &ContactMap,
    src_part: &TriMesh,
    tgt_part: &TriMesh,
    params: &PregParams,
) -> Result<TransferResult> {
    let reg = register_parts(src_part, tgt_part, params)?;
    let bvh = tgt_part.bvh();
    let points: Vec<ContactPoint> = src_map
        .points
        .par_iter()
        .map(|c| ContactPoint {
            position: bvh.closest(&reg.apply(&c.position), f64::INFINITY).point,
            gc: None,
            fallback: false,
            ..c.clone()
        })
        .collect();
    let n = points.len();
    Ok(TransferResult {
        method: Method::Preg,
        target_map: ContactMap { points, ..src_map.clone() },
        clamped: vec![false; n],
        fallback: vec![false; n],
        delta_h: 0.0,
        registration: Some(reg),
    })
}
