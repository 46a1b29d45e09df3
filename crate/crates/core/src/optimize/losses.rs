//! The three energy terms and their gradients.

use nalgebra::{Point3, Vector3};

use crate::contact::ContactMap;
use crate::hand::{HandPose, HandTemplate, PosedHand, Region, JOINT_COUNT, PARAM_COUNT};
use crate::mesh::SdfGrid;

/// Contact consistency for a set of anchor positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Consistency {
    /// With the hard minimum over anchors (reported value).
    pub value: f64,
    /// With the log-sum-exp softmin (optimized value).
    pub smooth: f64,
    /// Gradient of `smooth` with respect to each anchor position.
    pub anchor_grads: Vec<Vector3<f64>>,
}

/// Per region: the mean over its contacts (weighted) of the squared distance
/// to the nearest anchor of that region. Regions without contacts add 0.
pub fn consistency(
    anchors: &[Point3<f64>],
    anchor_regions: &[Region],
    map: &ContactMap,
    temperature: f64,
) -> Consistency {
    let mut by_region: Vec<Vec<usize>> = vec![Vec::new(); Region::COUNT];
    for (i, r) in anchor_regions.iter().enumerate() {
        by_region[r.index()].push(i);
    }
    let mut weight_sum = [0.0; Region::COUNT];
    for c in &map.points {
        weight_sum[c.region.index()] += c.weight;
    }
    let mut out = Consistency {
        value: 0.0,
        smooth: 0.0,
        anchor_grads: vec![Vector3::zeros(); anchors.len()],
    };
    let mut d2 = Vec::new();
    for c in &map.points {
        let r = c.region.index();
        let ids = &by_region[r];
        if ids.is_empty() || !(weight_sum[r] > 0.0) {
            continue;
        }
        let scale = c.weight / weight_sum[r];
        d2.clear();
        d2.extend(ids.iter().map(|&a| (anchors[a] - c.position).norm_squared()));
        let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let z: f64 = d2.iter().map(|d| (-(d - min) / temperature).exp()).sum();
        out.value += scale * min;
        out.smooth += scale * (min - temperature * z.ln());
        for (&a, d) in ids.iter().zip(&d2) {
            let p = (-(d - min) / temperature).exp() / z;
            out.anchor_grads[a] += (anchors[a] - c.position) * (2.0 * scale * p);
        }
    }
    out
}

/// Sum of penetration depths and the per-vertex gradient of that sum.
/// Points outside the grid box are never inside.
pub fn interpenetration(vertices: &[Point3<f64>], sdf: &SdfGrid) -> (f64, Vec<(usize, Vector3<f64>)>) {
    let mut value = 0.0;
    let mut grads = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        let s = sdf.query(v);
        if s.value < 0.0 {
            value -= s.value;
            grads.push((i, -s.gradient));
        }
    }
    (value, grads)
}

/// Squared rotation about forbidden axes plus squared excess beyond the
/// allowed ranges, per joint, in each joint's (flexion, abduction, twist)
/// basis.
pub fn loss_anatomical(pose: &HandPose, template: &HandTemplate) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; PARAM_COUNT];
    for j in 1..JOINT_COUNT {
        let basis = template.basis(j);
        let alpha = basis.transpose() * pose.joint(j);
        let mut g_alpha = Vector3::zeros();
        for (k, limit) in template.limits()[j].iter().enumerate() {
            let a = alpha[k];
            let excess = match limit {
                None => a,
                Some([lo, _]) if a < *lo => a - lo,
                Some([_, hi]) if a > *hi => a - hi,
                Some(_) => 0.0,
            };
            value += excess * excess;
            g_alpha[k] = 2.0 * excess;
        }
        let g = basis * g_alpha;
        for i in 0..3 {
            grad[HandPose::joint_index(j, i)] = g[i];
        }
    }
    (value, grad)
}

/// Contact consistency of a posed hand: `(value, smooth, d smooth / d pose)`.
pub fn loss_consistency(posed: &PosedHand, template: &HandTemplate, map: &ContactMap, temperature: f64) -> (f64, f64, Vec<f64>) {
    let anchors = posed.anchors();
    let regions: Vec<Region> = template.anchors().iter().map(|a| a.region).collect();
    let c = consistency(&anchors, &regions, map, temperature);
    let grads: Vec<(usize, Vector3<f64>)> = template
        .anchors()
        .iter()
        .zip(&c.anchor_grads)
        .map(|(a, g)| (a.vertex, *g))
        .collect();
    (c.value, c.smooth, posed.backprop(&grads))
}

/// Interpenetration of a posed hand and its pose gradient.
pub fn loss_interpenetration(posed: &PosedHand, sdf: &SdfGrid) -> (f64, Vec<f64>) {
    let (value, grads) = interpenetration(posed.vertices(), sdf);
    (value, posed.backprop(&grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::ContactPoint;
    use crate::mesh::{build_sdf, shapes};

    fn contact(p: [f64; 3], region: Region, weight: f64) -> ContactPoint {
        ContactPoint {
            position: Point3::from(p),
            region,
            weight,
            gc: None,
            fallback: false,
        }
    }

    fn map(points: Vec<ContactPoint>) -> ContactMap {
        ContactMap { tau_c: 0.2, n_samples: 100, points }
    }

    #[test]
    fn coincident_anchors_cost_nothing() {
        let anchors = [Point3::new(0.0, 0.0, 0.0), Point3::new(3.0, 0.0, 0.0)];
        let regions = [Region::Palm, Region::Palm];
        let m = map(vec![contact([3.0, 0.0, 0.0], Region::Palm, 0.7), contact([0.0, 0.0, 0.0], Region::Palm, 0.2)]);
        let c = consistency(&anchors, &regions, &m, 0.01);
        assert_eq!(c.value, 0.0);
        assert!(c.anchor_grads.iter().all(|g| g.norm() < 1e-100));
    }

    #[test]
    fn single_contact_costs_squared_distance() {
        let anchors = [Point3::new(1.0, 2.0, 2.0)];
        let m = map(vec![contact([0.0, 0.0, 0.0], Region::IndexDistal, 1.0)]);
        let c = consistency(&anchors, &[Region::IndexDistal], &m, 0.01);
        assert_eq!(c.value, 9.0);
        assert_eq!(c.smooth, 9.0);
        // A region without anchors contributes nothing.
        let c = consistency(&anchors, &[Region::Palm], &m, 0.01);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn softmin_is_below_hard_min_and_close() {
        let anchors = [Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.05, 0.0)];
        let m = map(vec![contact([0.0, 1.0, 0.0], Region::Palm, 1.0)]);
        let c = consistency(&anchors, &[Region::Palm; 2], &m, 0.01);
        assert!(c.smooth <= c.value && c.value - c.smooth < 0.01 * 2f64.ln() + 1e-12);
    }

    #[test]
    fn interpenetration_single_vertex() {
        let sphere = shapes::icosphere(3.0, 4);
        let sdf = build_sdf(&sphere, 64).unwrap();
        let verts = [Point3::new(0.0, 0.0, 2.6), Point3::new(0.0, 4.0, 0.0), Point3::new(9.0, 9.0, 9.0)];
        let (value, grads) = interpenetration(&verts, &sdf);
        // Facets sit slightly inside the sphere; compare with the mesh distance.
        let depth = sphere.closest_point(&verts[0]).distance;
        assert!((value - depth).abs() <= 1.5 * sdf.voxel_size, "{value} vs {depth}");
        assert!((depth - 0.4).abs() < 0.01);
        assert_eq!(grads.len(), 1);
        let outside = [Point3::new(0.0, 0.0, 3.5), Point3::new(40.0, 0.0, 0.0)];
        assert_eq!(interpenetration(&outside, &sdf).0, 0.0);
    }

    #[test]
    fn anatomical_examples() {
        let t = HandTemplate::builtin();
        assert_eq!(loss_anatomical(&HandPose::default(), t).0, 0.0);
        let pip = 6;
        let b = *t.basis(pip);
        let mut pose = HandPose::default();
        *pose.joint_mut(pip) = b.column(0) * 90f64.to_radians();
        assert!(loss_anatomical(&pose, t).0 < 1e-24);
        *pose.joint_mut(pip) = b.column(1) * 0.3;
        assert!((loss_anatomical(&pose, t).0 - 0.09).abs() < 1e-12);
        *pose.joint_mut(pip) = b.column(0) * 2.0;
        let over = 2.0 - 100f64.to_radians();
        assert!((loss_anatomical(&pose, t).0 - over * over).abs() < 1e-12);
    }
}
