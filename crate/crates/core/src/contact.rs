//! Hand-object contact maps and their lift onto a generalized cylinder.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Point3, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gc::{GcCoordinate, GeneralizedCylinder, TABLE_HEIGHTS};
use crate::hand::Region;
use crate::mesh::{sample_surface, TriMesh};

pub const CONTACT_SCHEMA: &str = "gcgrasp.contact_map";
pub const CONTACT_VERSION: u32 = 1;
pub const DEFAULT_TAU_C: f64 = 0.2;
pub const DEFAULT_SAMPLES: usize = 5000;
/// Contacts farther than this fraction of the part's box diagonal from the
/// cylinder surface belong to another part.
pub const LIFT_DROP_FRACTION: f64 = 0.2;

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactPoint {
    pub position: Point3<f64>,
    pub region: Region,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gc: Option<GcCoordinate>,
    /// The cylinder coordinate came from the nearest-skeleton fallback.
    #[serde(default, skip_serializing_if = "is_false")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContactMapFile", into = "ContactMapFile")]
pub struct ContactMap {
    pub tau_c: f64,
    pub n_samples: usize,
    pub points: Vec<ContactPoint>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactMapFile {
    schema: String,
    version: u32,
    tau_c: f64,
    n_samples: usize,
    points: Vec<ContactPoint>,
}

impl TryFrom<ContactMapFile> for ContactMap {
    type Error = String;

    fn try_from(f: ContactMapFile) -> std::result::Result<Self, String> {
        if f.schema != CONTACT_SCHEMA || f.version != CONTACT_VERSION {
            return Err(format!(
                "expected {CONTACT_SCHEMA} v{CONTACT_VERSION}, found {} v{}",
                f.schema, f.version
            ));
        }
        Ok(ContactMap {
            tau_c: f.tau_c,
            n_samples: f.n_samples,
            points: f.points,
        })
    }
}

impl From<ContactMap> for ContactMapFile {
    fn from(m: ContactMap) -> Self {
        ContactMapFile {
            schema: CONTACT_SCHEMA.into(),
            version: CONTACT_VERSION,
            tau_c: m.tau_c,
            n_samples: m.n_samples,
            points: m.points,
        }
    }
}

impl ContactMap {
    /// Percentage of the sample budget that is in contact.
    pub fn contact_ratio(&self) -> f64 {
        100.0 * self.points.len() as f64 / self.n_samples as f64
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Gaussian falloff of the hand distance.
pub fn contact_weight(distance: f64, tau_c: f64) -> f64 {
    (-(distance * distance) / (2.0 * tau_c * tau_c)).exp()
}

/// Samples `n_samples` object surface points and keeps those within `tau_c`
/// of the hand surface, labeled with the region of the nearest hand face.
pub fn extract_contact_map(
    object: &TriMesh,
    hand: &TriMesh,
    face_regions: &[Region],
    n_samples: usize,
    tau_c: f64,
    seed: u64,
) -> Result<ContactMap> {
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(Error::Invalid(format!("contact threshold must be positive, got {tau_c}")));
    }
    if face_regions.len() != hand.faces().len() {
        return Err(Error::Invalid(format!(
            "{} region labels for {} hand faces",
            face_regions.len(),
            hand.faces().len()
        )));
    }
    let samples = sample_surface(object, n_samples, seed)?;
    let bvh = hand.bvh();
    let points: Vec<ContactPoint> = samples
        .points
        .par_iter()
        .filter_map(|p| {
            let hit = bvh.closest(p, f64::INFINITY);
            (hit.distance <= tau_c).then(|| ContactPoint {
                position: *p,
                region: face_regions[hit.face],
                weight: contact_weight(hit.distance, tau_c),
                gc: None,
                fallback: false,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::NoContact { tau_c });
    }
    Ok(ContactMap {
        tau_c,
        n_samples,
        points,
    })
}

/// Dense `(h, φ)` samples of a cylinder surface for nearest-point seeding.
struct SurfaceGrid {
    heights: Vec<f64>,
    angles: Vec<f64>,
    points: Vec<Point3<f64>>,
}

impl SurfaceGrid {
    fn new(gc: &GeneralizedCylinder) -> Self {
        let m = gc.params().m;
        let heights: Vec<f64> = (0..TABLE_HEIGHTS)
            .map(|i| gc.height() * i as f64 / (TABLE_HEIGHTS - 1) as f64)
            .collect();
        let angles: Vec<f64> = (0..m).map(|k| TAU * k as f64 / m as f64).collect();
        let points = heights
            .iter()
            .flat_map(|&h| angles.iter().map(move |&phi| (h, phi)))
            .map(|(h, phi)| gc.evaluate_surface(h, phi))
            .collect();
        SurfaceGrid { heights, angles, points }
    }

    fn seed(&self, p: &Point3<f64>) -> (f64, f64) {
        let (best, _) = self
            .points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q - p).norm_squared()))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let m = self.angles.len();
        (self.heights[best / m], self.angles[best % m])
    }
}

/// Closest point of σ to `p` by Levenberg-Marquardt on `(h, φ)` from a seed,
/// with finite-difference partials. Only improving steps are taken.
fn refine(gc: &GeneralizedCylinder, p: &Point3<f64>, seed: (f64, f64)) -> (f64, f64) {
    let height = gc.height();
    let (mut h, mut phi) = seed;
    let dist2 = |h: f64, phi: f64| (gc.evaluate_surface(h, phi) - p).norm_squared();
    let mut cur = dist2(h, phi);
    let mut damping = 1e-3;
    let (eh, ep) = (1e-6 * height, 1e-6);
    for _ in 0..30 {
        let r = gc.evaluate_surface(h, phi) - p;
        let jh = (gc.evaluate_surface((h + eh).min(height), phi) - gc.evaluate_surface((h - eh).max(0.0), phi))
            / ((h + eh).min(height) - (h - eh).max(0.0));
        let jp = (gc.evaluate_surface(h, phi + ep) - gc.evaluate_surface(h, phi - ep)) / (2.0 * ep);
        let jtj = Matrix2::new(jh.dot(&jh), jh.dot(&jp), jh.dot(&jp), jp.dot(&jp));
        let jtr = Vector2::new(jh.dot(&r), jp.dot(&r));
        let mut improved = false;
        for _ in 0..8 {
            let a = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * damping + Matrix2::identity() * 1e-15;
            let Some(step) = a.try_inverse().map(|inv| inv * jtr) else { break };
            let (nh, np) = ((h - step.x).clamp(0.0, height), phi - step.y);
            let next = dist2(nh, np);
            if next < cur {
                let small = (nh - h).abs() < 1e-12 * height && (np - phi).abs() < 1e-12;
                h = nh;
                phi = np;
                cur = next;
                damping = (damping * 0.3).max(1e-9);
                improved = !small;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (h, crate::gc::wrap_angle(phi))
}

/// Result of lifting a contact map to a cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftOutcome {
    pub map: ContactMap,
    /// Contacts too far from the cylinder (other parts of the object).
    pub dropped: usize,
}

/// Gives each contact the cylinder coordinate of its closest point on σ.
/// Contacts farther than [`LIFT_DROP_FRACTION`] of the part's box diagonal
/// are dropped with a warning.
pub fn lift_to_gc(map: &ContactMap, gc: &GeneralizedCylinder, part: &TriMesh) -> Result<LiftOutcome> {
    let grid = SurfaceGrid::new(gc);
    let gate = LIFT_DROP_FRACTION * part.aabb().diagonal();
    let lifted: Vec<Option<ContactPoint>> = map
        .points
        .par_iter()
        .map(|c| {
            let (h, phi) = refine(gc, &c.position, grid.seed(&c.position));
            let q = gc.evaluate_surface(h, phi);
            if (q - c.position).norm() > gate {
                return None;
            }
            let r = gc.parameterize(&q, &gc.surface_normal(h, phi));
            Some(ContactPoint {
                gc: Some(r.coord),
                fallback: r.fallback,
                ..c.clone()
            })
        })
        .collect();
    let points: Vec<ContactPoint> = lifted.into_iter().flatten().collect();
    let dropped = map.points.len() - points.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} contact(s) farther than {gate:.3} cm from the cylinder surface");
    }
    if points.is_empty() {
        return Err(Error::AllContactsDropped);
    }
    Ok(LiftOutcome {
        map: ContactMap { points, ..map.clone() },
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::gc::{build_gc, GcParams, Skeleton};
    use crate::mesh::shapes;

    fn sphere_at(r: f64, c: Point3<f64>) -> TriMesh {
        shapes::icosphere(r, 4).map_vertices(|v| v + c.coords).unwrap()
    }

    #[test]
    fn tangent_spheres_touch_in_a_cap() {
        let (r_obj, r_hand, tau) = (2.0, 1.5, 0.3);
        let object = sphere_at(r_obj, Point3::origin());
        let hand = sphere_at(r_hand, Point3::new(0.0, 0.0, r_obj + r_hand));
        let labels = vec![Region::Palm; hand.faces().len()];
        let map = extract_contact_map(&object, &hand, &labels, 5000, tau, 1).unwrap();
        // Law of cosines: object points within tau of the hand sphere.
        let d = r_obj + r_hand;
        let cos_max = (r_obj * r_obj + d * d - (r_hand + tau).powi(2)) / (2.0 * r_obj * d);
        let theta_max = cos_max.acos();
        for c in &map.points {
            let theta = (c.position.z / c.position.coords.norm()).clamp(-1.0, 1.0).acos();
            assert!(theta <= theta_max + 0.02, "{theta} > {theta_max}");
            assert!(c.weight > 0.0 && c.weight <= 1.0);
        }
        // Planar-hand approximation of the cap radius.
        let geodesic = r_obj * theta_max;
        assert!(geodesic > 0.5 * (2.0 * r_obj * tau).sqrt() && geodesic < (2.0 * r_obj * tau).sqrt());
        assert_eq!(map.contact_ratio(), 100.0 * map.points.len() as f64 / 5000.0);
    }

    #[test]
    fn far_hand_has_no_contact() {
        let object = sphere_at(2.0, Point3::origin());
        let hand = sphere_at(1.0, Point3::new(13.0, 0.0, 0.0));
        let labels = vec![Region::Palm; hand.faces().len()];
        assert!(matches!(
            extract_contact_map(&object, &hand, &labels, 500, 0.2, 0),
            Err(Error::NoContact { .. })
        ));
    }

    #[test]
    fn weight_at_the_threshold() {
        assert_eq!(contact_weight(0.2, 0.2), (-0.5f64).exp());
        assert_eq!(contact_weight(0.0, 0.2), 1.0);
    }

    #[test]
    fn boundary_sample_is_included() {
        // Hand triangle exactly tau above a flat object face.
        let object = shapes::box_mesh(Vector3::new(4.0, 4.0, 2.0));
        let top = 1.0 + 0.25;
        let hand = TriMesh::new(
            vec![
                Point3::new(-5.0, -5.0, top),
                Point3::new(5.0, -5.0, top),
                Point3::new(0.0, 5.0, top),
                Point3::new(0.0, 0.0, top + 1.0),
            ],
            vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]],
        )
        .unwrap();
        let labels = vec![Region::IndexDistal; 4];
        let map = extract_contact_map(&object, &hand, &labels, 2000, 0.25, 3).unwrap();
        assert!(!map.points.is_empty());
        for c in &map.points {
            assert!((c.position.z - 1.0).abs() < 1e-12);
            assert_eq!(c.weight, (-0.5f64).exp());
        }
    }

    fn cylinder() -> (TriMesh, GeneralizedCylinder) {
        let mesh = shapes::cylinder(1.0, 4.0, 128, 16);
        let sk = Skeleton::new(vec![Point3::origin(), Point3::new(0.0, 0.0, 4.0)]).unwrap();
        let gc = build_gc(&mesh, &sk, &GcParams::default()).unwrap();
        (mesh, gc)
    }

    fn single(p: Point3<f64>) -> ContactMap {
        ContactMap {
            tau_c: 0.2,
            n_samples: 1,
            points: vec![ContactPoint {
                position: p,
                region: Region::Palm,
                weight: 1.0,
                gc: None,
                fallback: false,
            }],
        }
    }

    #[test]
    fn offset_point_lifts_to_its_foot() {
        let (mesh, gc) = cylinder();
        let foot = gc.evaluate_surface(2.0, 0.0);
        let n = gc.surface_normal(2.0, 0.0);
        let lifted = lift_to_gc(&single(foot + n * 0.1), &gc, &mesh).unwrap();
        let c = lifted.map.points[0].gc.unwrap();
        assert!((c.h - 2.0).abs() <= 4.0 / 256.0, "{c:?}");
        let dphi = c.phi.min(TAU - c.phi);
        assert!(dphi <= TAU / 64.0, "{c:?}");
    }

    #[test]
    fn surface_points_keep_their_coordinate() {
        let (mesh, gc) = cylinder();
        for &(h, phi) in &[(0.7, 0.3), (2.2, 3.0), (3.5, 5.5)] {
            let p = gc.evaluate_surface(h, phi);
            let own = gc.parameterize(&p, &gc.surface_normal(h, phi)).coord;
            let c = lift_to_gc(&single(p), &gc, &mesh).unwrap().map.points[0].gc.unwrap();
            assert!((c.h - own.h).abs() < 1e-3 * 4.0, "{c:?} vs {own:?}");
            let dphi = (c.phi - own.phi).abs();
            assert!(dphi.min(TAU - dphi) < 1e-3, "{c:?} vs {own:?}");
        }
    }

    #[test]
    fn distant_contacts_are_dropped() {
        let (mesh, gc) = cylinder();
        let mut map = single(Point3::new(1.0, 0.0, 2.0));
        map.points.push(ContactPoint {
            position: Point3::new(11.0, 0.0, 2.0),
            ..map.points[0].clone()
        });
        let out = lift_to_gc(&map, &gc, &mesh).unwrap();
        assert_eq!((out.map.points.len(), out.dropped), (1, 1));
        let far = single(Point3::new(11.0, 0.0, 2.0));
        assert!(matches!(lift_to_gc(&far, &gc, &mesh), Err(Error::AllContactsDropped)));
    }

    #[test]
    fn lifting_is_idempotent() {
        let (mesh, gc) = cylinder();
        let hand = sphere_at(0.8, Point3::new(1.85, 0.0, 2.0));
        let labels = vec![Region::ThumbTip; hand.faces().len()];
        let map = extract_contact_map(&mesh, &hand, &labels, 3000, 0.2, 9).unwrap();
        let once = lift_to_gc(&map, &gc, &mesh).unwrap().map;
        let twice = lift_to_gc(&once, &gc, &mesh).unwrap().map;
        assert_eq!(once, twice);
    }

    #[test]
    fn json_shape() {
        let mut map = single(Point3::new(1.0, 2.0, 3.0));
        map.points[0].gc = Some(GcCoordinate { h: 1.0, phi: 0.5, l: 1.5 });
        let text = serde_json::to_string(&map).unwrap();
        assert_eq!(
            text,
            r#"{"schema":"gcgrasp.contact_map","version":1,"tau_c":0.2,"n_samples":1,"points":[{"position":[1.0,2.0,3.0],"region":"palm","weight":1.0,"gc":{"h":1.0,"phi":0.5,"L":1.5}}]}"#
        );
        assert_eq!(serde_json::from_str::<ContactMap>(&text).unwrap(), map);
    }
}
