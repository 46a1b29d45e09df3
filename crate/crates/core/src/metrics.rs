//! Grasp quality metrics: penetration depth (PD), penetration volume (PV),
//! contact ratio (CR) and fingertip distance (DD).

use std::path::Path;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{DEFAULT_SAMPLES, DEFAULT_TAU_C};
use crate::error::{Error, Result};
use crate::mesh::{sample_surface, voxelize_on_grid, GridSpec, SdfGrid, TriMesh};

pub const METRICS_SCHEMA: &str = "gcgrasp.metrics";
pub const METRICS_VERSION: u32 = 1;
pub const DEFAULT_PV_RESOLUTION: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsParams {
    /// Voxels along the longest axis of the union bounding box.
    pub pv_resolution: usize,
    pub n_samples: usize,
    pub tau_c: f64,
    pub seed: u64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        MetricsParams {
            pv_resolution: DEFAULT_PV_RESOLUTION,
            n_samples: DEFAULT_SAMPLES,
            tau_c: DEFAULT_TAU_C,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub schema: String,
    pub version: u32,
    /// cm
    pub pd: f64,
    /// cm^3
    pub pv: f64,
    /// percent
    pub cr: f64,
    /// cm
    pub dd: f64,
    pub params: MetricsParams,
    /// What object samples are measured against for CR.
    pub cr_reference: String,
}

impl MetricsReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: MetricsReport = serde_json::from_str(&text)?;
        if report.schema != METRICS_SCHEMA || report.version != METRICS_VERSION {
            return Err(Error::Invalid(format!("unsupported metrics file {} v{}", report.schema, report.version)));
        }
        Ok(report)
    }
}

/// Largest surface distance among hand vertices the SDF reports inside.
pub fn penetration_depth(hand: &TriMesh, object: &TriMesh, sdf: &SdfGrid) -> f64 {
    let bvh = object.bvh();
    hand.vertices()
        .par_iter()
        .filter(|v| sdf.query(v).value < 0.0)
        .map(|v| bvh.closest(v, f64::INFINITY).distance)
        .reduce(|| 0.0, f64::max)
}

/// Volume of voxels inside both meshes, on a grid over their union box.
pub fn penetration_volume(hand: &TriMesh, object: &TriMesh, resolution: usize) -> Result<f64> {
    if resolution == 0 {
        return Err(Error::Invalid("voxel resolution must be >= 1".into()));
    }
    let spec = GridSpec::covering(&hand.aabb().union(&object.aabb()), resolution, 0);
    let a = voxelize_on_grid(hand, &spec)?;
    let b = voxelize_on_grid(object, &spec)?;
    Ok(a.intersection_count(&b) as f64 * spec.voxel_volume())
}

/// Percentage of object surface samples within `tau_c` of the hand surface.
pub fn contact_ratio(hand: &TriMesh, object: &TriMesh, n_samples: usize, tau_c: f64, seed: u64) -> Result<f64> {
    if !(tau_c >= 0.0 && tau_c.is_finite()) {
        return Err(Error::Invalid(format!("contact threshold must be finite and >= 0, got {tau_c}")));
    }
    let samples = sample_surface(object, n_samples, seed)?;
    let bvh = hand.bvh();
    let hits = samples.points.par_iter().filter(|p| bvh.closest(p, tau_c * (1.0 + 1e-12) + 1e-12).distance <= tau_c).count();
    Ok(100.0 * hits as f64 / n_samples as f64)
}

/// Mean distance from every fingertip vertex to the object surface.
pub fn disjointed_distance(fingertips: &[Vec<Point3<f64>>], object: &TriMesh) -> Result<f64> {
    if fingertips.is_empty() || fingertips.iter().any(|f| f.is_empty()) {
        return Err(Error::Invalid("fingertip vertex sets must be non-empty".into()));
    }
    let bvh = object.bvh();
    let points: Vec<&Point3<f64>> = fingertips.iter().flatten().collect();
    let distances: Vec<f64> = points.par_iter().map(|p| bvh.closest(p, f64::INFINITY).distance).collect();
    Ok(distances.iter().sum::<f64>() / distances.len() as f64)
}

/// All four metrics for a posed hand and the object it grasps.
pub fn evaluate_grasp(
    hand: &TriMesh,
    fingertips: &[Vec<Point3<f64>>],
    object: &TriMesh,
    sdf: &SdfGrid,
    params: &MetricsParams,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        schema: METRICS_SCHEMA.into(),
        version: METRICS_VERSION,
        pd: penetration_depth(hand, object, sdf),
        pv: penetration_volume(hand, object, params.pv_resolution)?,
        cr: contact_ratio(hand, object, params.n_samples, params.tau_c, params.seed)?,
        dd: disjointed_distance(fingertips, object)?,
        params: *params,
        cr_reference: "hand_surface".into(),
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;

    use super::*;
    use crate::mesh::{build_sdf, shapes};

    fn at(mesh: &TriMesh, offset: [f64; 3]) -> TriMesh {
        mesh.map_vertices(|p| p + Vector3::from(offset)).unwrap()
    }

    fn unit_cube() -> TriMesh {
        shapes::box_mesh(Vector3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn overlapping_cubes_share_a_half_slab() {
        let a = unit_cube();
        let b = at(&a, [0.0, 0.0, 0.5]);
        let pv = penetration_volume(&a, &b, 128).unwrap();
        let h = 1.5 / 128.0;
        // One voxel shell around the 1 x 1 x 0.5 slab.
        assert!((pv - 0.5).abs() <= 4.0 * h, "{pv}");
        assert_eq!(pv, penetration_volume(&b, &a, 128).unwrap());
        assert_eq!(penetration_volume(&a, &at(&a, [3.0, 0.0, 0.0]), 128).unwrap(), 0.0);
    }

    #[test]
    fn self_overlap_is_the_voxelized_volume() {
        let s = shapes::icosphere(1.0, 3);
        let spec = GridSpec::covering(&s.aabb(), 64, 0);
        let own = voxelize_on_grid(&s, &spec).unwrap().volume();
        assert_eq!(penetration_volume(&s, &s, 64).unwrap(), own);
    }

    #[test]
    fn open_meshes_are_rejected_for_volume() {
        let open = shapes::open_cylinder(1.0, 2.0, 16, 3);
        assert!(matches!(penetration_volume(&open, &unit_cube(), 32), Err(Error::NotWatertight { .. })));
    }

    #[test]
    fn pushed_vertex_depth() {
        let object = shapes::icosphere(5.0, 4);
        let sdf = build_sdf(&object, 128).unwrap();
        let hand = shapes::icosphere(0.5, 1);
        // Put the hand outside, touching the sphere at +z, then push its
        // lowest vertex 0.3 inside.
        let hand = at(&hand, [0.0, 0.0, 5.52]);
        assert_eq!(penetration_depth(&hand, &object, &sdf), 0.0);
        let low = (0..hand.vertices().len()).min_by(|&a, &b| hand.vertices()[a].z.total_cmp(&hand.vertices()[b].z)).unwrap();
        let mut verts = hand.vertices().to_vec();
        verts[low] = Point3::new(0.0, 0.0, 4.7);
        let pushed = TriMesh::new(verts, hand.faces().to_vec()).unwrap();
        let pd = penetration_depth(&pushed, &object, &sdf);
        assert!((pd - 0.3).abs() <= 1.5 * sdf.voxel_size, "{pd}");
    }

    #[test]
    fn depth_is_the_max_not_the_mean() {
        let object = shapes::box_mesh(Vector3::new(10.0, 10.0, 10.0));
        let sdf = build_sdf(&object, 64).unwrap();
        let verts = vec![Point3::new(0.0, 0.0, 4.9), Point3::new(1.0, 0.0, 4.6), Point3::new(0.0, 1.0, 6.0)];
        let hand = TriMesh::new(verts, vec![[0, 1, 2]]).unwrap();
        assert!((penetration_depth(&hand, &object, &sdf) - 0.4).abs() < 1e-9);
    }

    #[test]
    fn contact_ratio_matches_the_cap_fraction() {
        let (r_obj, r_hand, tau) = (2.0, 1.5, 0.3);
        let object = shapes::icosphere(r_obj, 5);
        let hand = at(&shapes::icosphere(r_hand, 5), [0.0, 0.0, r_obj + r_hand]);
        let d = r_obj + r_hand;
        let cos_max = (r_obj * r_obj + d * d - (r_hand + tau).powi(2)) / (2.0 * r_obj * d);
        let p = (1.0 - cos_max) / 2.0;
        let n = 5000.0;
        let cr = contact_ratio(&hand, &object, 5000, tau, 7).unwrap();
        let count = cr / 100.0 * n;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((count - n * p).abs() <= 3.0 * sigma, "{count} vs {}", n * p);
        assert_eq!(contact_ratio(&at(&hand, [20.0, 0.0, 0.0]), &object, 500, tau, 7).unwrap(), 0.0);
        assert_eq!(contact_ratio(&object, &object, 500, tau, 7).unwrap(), 100.0);
    }

    #[test]
    fn fingertip_distance_arithmetic() {
        let object = shapes::box_mesh(Vector3::new(10.0, 10.0, 10.0));
        let on = |x: f64| Point3::new(x, 0.0, 5.0);
        let off = |x: f64| Point3::new(x, 0.0, 6.0);
        let mut tips = vec![vec![on(0.0), on(1.0)]; 4];
        tips.push(vec![off(0.0), off(1.0)]);
        assert_eq!(disjointed_distance(&tips, &object).unwrap(), 0.2);
        let uniform: Vec<Vec<_>> = (0..5).map(|i| vec![Point3::new(i as f64 - 2.0, 0.0, 5.75)]).collect();
        assert_eq!(disjointed_distance(&uniform, &object).unwrap(), 0.75);
        assert!(disjointed_distance(&[vec![]], &object).is_err());
    }

    #[test]
    fn contact_ratio_grows_with_threshold() {
        let object = shapes::icosphere(2.0, 3);
        let hand = at(&shapes::icosphere(1.0, 3), [0.0, 0.0, 3.1]);
        let mut last = 0.0;
        for tau in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let cr = contact_ratio(&hand, &object, 2000, tau, 3).unwrap();
            assert!(cr >= last && (0.0..=100.0).contains(&cr));
            last = cr;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn metrics_survive_a_common_rigid_motion(
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..3.0,
            shift in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let object = shapes::icosphere(2.0, 3);
            let hand = at(&shapes::icosphere(1.0, 3), [0.0, 0.3, 2.6]);
            let tips = vec![hand.vertices()[..6].to_vec()];
            let axis = Vector3::from(axis);
            prop_assume!(axis.norm() > 0.1);
            let rot = Rotation3::new(axis.normalize() * angle);
            let motion = |p: &Point3<f64>| rot * p + Vector3::from(shift);
            let (object2, hand2) = (object.map_vertices(motion).unwrap(), hand.map_vertices(motion).unwrap());
            let tips2 = vec![tips[0].iter().map(motion).collect::<Vec<_>>()];
            let params = MetricsParams { pv_resolution: 48, n_samples: 1000, ..Default::default() };
            let a = evaluate_grasp(&hand, &tips, &object, &build_sdf(&object, 48).unwrap(), &params).unwrap();
            let b = evaluate_grasp(&hand2, &tips2, &object2, &build_sdf(&object2, 48).unwrap(), &params).unwrap();
            let voxel = 4.0 / 48.0;
            prop_assert!((a.pd - b.pd).abs() <= 1.5 * voxel);
            prop_assert!((a.dd - b.dd).abs() < 1e-9);
            prop_assert!((a.cr - b.cr).abs() <= 0.2);
            // One voxel shell around the lens-shaped overlap.
            let bound = (5.0 * 4.0 / 48.0f64).powi(3).max(0.6 * (a.pv + b.pv) + 0.1);
            prop_assert!((a.pv - b.pv).abs() <= bound, "{} vs {}", a.pv, b.pv);
        }
    }
}
