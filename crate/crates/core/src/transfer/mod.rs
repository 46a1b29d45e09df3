//! Carrying a lifted contact map from one cylinder to another, plus the
//! rigid-registration baseline.

mod preg;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactMap, ContactPoint};
use crate::error::{Error, Result};
use crate::gc::{GcCoordinate, GeneralizedCylinder};

pub use preg::{register_parts, transfer_preg_baseline, PregParams, Registration};

pub const TRANSFER_SCHEMA: &str = "gcgrasp.transfer";
pub const TRANSFER_VERSION: u32 = 1;
/// Fraction of clamped points at which the target is reported as too short.
pub const CLAMP_WARNING_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferParams {
    /// Added to every source angle to align the angular origins of the two
    /// cylinders. Zero copies angles unchanged.
    pub phi_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gc,
    Preg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferFile", into = "TransferFile")]
pub struct TransferResult {
    pub method: Method,
    pub target_map: ContactMap,
    /// Per target point: its surface distance was clamped to the part.
    pub clamped: Vec<bool>,
    /// Per target point: its source coordinate came from a fallback.
    pub fallback: Vec<bool>,
    pub delta_h: f64,
    pub registration: Option<Registration>,
}

impl TransferResult {
    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&c| c).count()
    }

    /// True when at least half the points hit the end of the target part.
    pub fn target_too_short(&self) -> bool {
        let n = self.clamped.len();
        n > 0 && self.clamped_count() as f64 >= CLAMP_WARNING_FRACTION * n as f64
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransferFile {
    schema: String,
    version: u32,
    method: Method,
    tau_c: f64,
    n_samples: usize,
    points: Vec<ContactPoint>,
    #[serde(rename = "delta_H")]
    delta_h: f64,
    clamped: usize,
    fallbacks: usize,
    clamped_points: Vec<usize>,
    fallback_points: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    registration: Option<Registration>,
}

fn indices(flags: &[bool]) -> Vec<usize> {
    flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
}

impl From<TransferResult> for TransferFile {
    fn from(r: TransferResult) -> Self {
        TransferFile {
            schema: TRANSFER_SCHEMA.into(),
            version: TRANSFER_VERSION,
            method: r.method,
            tau_c: r.target_map.tau_c,
            n_samples: r.target_map.n_samples,
            delta_h: r.delta_h,
            clamped: r.clamped_count(),
            fallbacks: r.fallback_count(),
            clamped_points: indices(&r.clamped),
            fallback_points: indices(&r.fallback),
            points: r.target_map.points,
            registration: r.registration,
        }
    }
}

impl TryFrom<TransferFile> for TransferResult {
    type Error = String;

    fn try_from(f: TransferFile) -> std::result::Result<Self, String> {
        if f.schema != TRANSFER_SCHEMA || f.version != TRANSFER_VERSION {
            return Err(format!(
                "expected {TRANSFER_SCHEMA} v{TRANSFER_VERSION}, found {} v{}",
                f.schema, f.version
            ));
        }
        let n = f.points.len();
        let mut clamped = vec![false; n];
        let mut fallback = vec![false; n];
        for (list, flags) in [(&f.clamped_points, &mut clamped), (&f.fallback_points, &mut fallback)] {
            for &i in list {
                *flags.get_mut(i).ok_or_else(|| format!("flag index {i} out of range"))? = true;
            }
        }
        Ok(TransferResult {
            method: f.method,
            target_map: ContactMap {
                tau_c: f.tau_c,
                n_samples: f.n_samples,
                points: f.points,
            },
            clamped,
            fallback,
            delta_h: f.delta_h,
            registration: f.registration,
        })
    }
}

/// Recentering offset: half the difference of the total skeleton lengths.
pub fn delta_height(src: &GeneralizedCylinder, tgt: &GeneralizedCylinder) -> f64 {
    (tgt.height() - src.height()) / 2.0
}

/// Moves every lifted contact to the target cylinder keeping its angle and
/// shifting its surface distance by the recentering offset. Distances
/// outside `[0, L_max(φ)]` are clamped and flagged.
pub fn transfer_contact(
    src_map: &ContactMap,
    src_gc: &GeneralizedCylinder,
    tgt_gc: &GeneralizedCylinder,
    params: &TransferParams,
) -> Result<TransferResult> {
    if let Some(i) = src_map.points.iter().position(|c| c.gc.is_none()) {
        return Err(Error::Invalid(format!("contact {i} has no cylinder coordinate (map not lifted)")));
    }
    let delta_h = delta_height(src_gc, tgt_gc);
    let moved: Vec<(ContactPoint, bool)> = src_map
        .points
        .par_iter()
        .map(|c| {
            let s = c.gc.expect("checked above");
            let phi = if params.phi_offset != 0.0 { s.phi + params.phi_offset } else { s.phi };
            let wanted = s.l + delta_h;
            let l_max = tgt_gc.max_surface_distance(phi);
            let l = wanted.clamp(0.0, l_max);
            let clamped = l != wanted;
            let h = tgt_gc.invert_surface_distance(phi, l).h;
            let point = ContactPoint {
                position: tgt_gc.evaluate_surface(h, phi),
                gc: Some(GcCoordinate { h, phi, l }),
                ..c.clone()
            };
            (point, clamped)
        })
        .collect();
    let (points, clamped): (Vec<_>, Vec<_>) = moved.into_iter().unzip();
    let result = TransferResult {
        method: Method::Gc,
        fallback: src_map.points.iter().map(|c| c.fallback).collect(),
        target_map: ContactMap { points, ..src_map.clone() },
        clamped,
        delta_h,
        registration: None,
    };
    if result.target_too_short() {
        log::warn!(
            "target part too short for source grasp ({} of {} contacts clamped)",
            result.clamped_count(),
            result.clamped.len()
        );
    }
    Ok(result)
}

/// Rigid motion `x -> rotation x + translation`.
pub(crate) fn apply(rotation: &Matrix3<f64>, translation: &Vector3<f64>, p: &nalgebra::Point3<f64>) -> nalgebra::Point3<f64> {
    nalgebra::Point3::from(rotation * p.coords + translation)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use nalgebra::Point3;

    use super::*;
    use crate::gc::{build_gc, GcParams, Skeleton};
    use crate::hand::Region;
    use crate::mesh::shapes;

    fn cylinder_gc(radius: f64, height: f64) -> GeneralizedCylinder {
        let mesh = shapes::cylinder(radius, height, 96, 16);
        let sk = Skeleton::new(vec![Point3::origin(), Point3::new(0.0, 0.0, height)]).unwrap();
        build_gc(&mesh, &sk, &GcParams::default()).unwrap()
    }

    fn lifted(gc: &GeneralizedCylinder, coords: &[(f64, f64)]) -> ContactMap {
        ContactMap {
            tau_c: 0.2,
            n_samples: 100,
            points: coords
                .iter()
                .map(|&(h, phi)| ContactPoint {
                    position: gc.evaluate_surface(h, phi),
                    region: Region::IndexMiddle,
                    weight: 0.9,
                    gc: Some(GcCoordinate { h, phi, l: gc.surface_distance(h, phi) }),
                    fallback: false,
                })
                .collect(),
        }
    }

    #[test]
    fn identity_transfer_reproduces_positions() {
        let gc = cylinder_gc(1.0, 4.0);
        let coords: Vec<(f64, f64)> = (0..40).map(|i| (0.1 * i as f64, 0.37 * i as f64 % TAU)).collect();
        let src = lifted(&gc, &coords);
        let r = transfer_contact(&src, &gc, &gc, &TransferParams::default()).unwrap();
        assert_eq!(r.delta_h, 0.0);
        for (s, t) in src.points.iter().zip(&r.target_map.points) {
            assert_eq!(s.gc.unwrap().phi.to_bits(), t.gc.unwrap().phi.to_bits());
            assert!((s.position - t.position).norm() <= 2.0 * 4.0 / 256.0);
            assert_eq!((s.region, s.weight), (t.region, t.weight));
        }
        assert_eq!(r.clamped_count(), 0);
    }

    #[test]
    fn doubled_cylinder_keeps_distance_differences() {
        let src_gc = cylinder_gc(1.0, 4.0);
        let tgt_gc = cylinder_gc(2.0, 8.0);
        let src = lifted(&src_gc, &[(1.0, 0.5), (1.8, 0.5), (2.5, 2.0), (3.0, 4.0)]);
        let r = transfer_contact(&src, &src_gc, &tgt_gc, &TransferParams::default()).unwrap();
        assert!((r.delta_h - 2.0).abs() < 1e-9);
        let tol = 2.0 * 8.0 / 256.0;
        let achieved: Vec<f64> = r
            .target_map
            .points
            .iter()
            .map(|p| {
                let c = p.gc.unwrap();
                tgt_gc.surface_distance(c.h, c.phi)
            })
            .collect();
        for i in 0..4 {
            for j in 0..4 {
                let ls = src.points[i].gc.unwrap().l - src.points[j].gc.unwrap().l;
                assert!(((achieved[i] - achieved[j]) - ls).abs() < tol);
            }
        }
    }

    #[test]
    fn too_short_target_clamps() {
        let src_gc = cylinder_gc(1.0, 4.0);
        let tgt_gc = cylinder_gc(1.0, 2.0);
        let src = lifted(&src_gc, &[(4.0, 1.0), (0.0, 1.0)]);
        let r = transfer_contact(&src, &src_gc, &tgt_gc, &TransferParams::default()).unwrap();
        assert_eq!(r.clamped, vec![true, true]);
        assert!(r.target_too_short());
        let top = r.target_map.points[0].gc.unwrap();
        assert_eq!(top.h, 2.0);
        assert_eq!(r.target_map.points[1].gc.unwrap().h, 0.0);
    }

    #[test]
    fn phi_offset_rotates_contacts() {
        let gc = cylinder_gc(1.0, 4.0);
        let src = lifted(&gc, &[(2.0, 0.0)]);
        let r = transfer_contact(&src, &gc, &gc, &TransferParams { phi_offset: TAU / 4.0 }).unwrap();
        let p = r.target_map.points[0].position;
        let expected = gc.evaluate_surface(2.0, TAU / 4.0);
        assert!((p - expected).norm() < 0.05, "{p:?}");
    }

    #[test]
    fn unlifted_map_is_rejected() {
        let gc = cylinder_gc(1.0, 4.0);
        let mut src = lifted(&gc, &[(2.0, 0.0)]);
        src.points[0].gc = None;
        assert!(matches!(
            transfer_contact(&src, &gc, &gc, &TransferParams::default()),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn json_carries_metadata() {
        let src_gc = cylinder_gc(1.0, 4.0);
        let tgt_gc = cylinder_gc(1.0, 2.0);
        let mut src = lifted(&src_gc, &[(4.0, 1.0), (1.0, 1.0)]);
        src.points[1].fallback = true;
        let r = transfer_contact(&src, &src_gc, &tgt_gc, &TransferParams::default()).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.starts_with(r#"{"schema":"gcgrasp.transfer","version":1,"method":"gc""#));
        assert!(text.contains(r#""delta_H":-1.0,"clamped":1,"fallbacks":1"#), "{text}");
        assert_eq!(serde_json::from_str::<TransferResult>(&text).unwrap(), r);
    }
}
