//! Articulated template hand: a 21-joint kinematic tree with linear blend
//! skinning, per-face region labels, anchor vertices and fingertip sets.
//!
//! Joint order is wrist, then thumb (CMC, MCP, IP, tip), index, middle, ring
//! and little (MCP, PIP, DIP, tip). Parents always precede their children.

mod pose;
mod procedural;
mod region;
pub mod rotation;

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{obj_string, parse_obj, TriMesh};

pub use pose::{pose_hand, HandPose, PosedHand, POSE_SCHEMA, POSE_VERSION};
pub use procedural::procedural_template;
pub use region::Region;

pub const JOINT_COUNT: usize = 21;
/// Global rotation (3), global translation (3), then 20 joints × 3.
pub const PARAM_COUNT: usize = 6 + 3 * (JOINT_COUNT - 1);
pub const FINGER_COUNT: usize = 5;
pub const MAX_INFLUENCES: usize = 4;
pub const TEMPLATE_SCHEMA: &str = "gcgrasp.hand_template";
pub const TEMPLATE_VERSION: u32 = 1;

const BUILTIN_OBJ: &str = include_str!("../../assets/hand_template.obj");
const BUILTIN_JSON: &str = include_str!("../../assets/hand_template.json");

/// Allowed angle range (radians) about the flexion, abduction and twist axes
/// of a joint. `None` forbids rotation about that axis.
pub type AxisLimits = [Option<[f64; 2]>; 3];

/// A designated hand-surface vertex attracted to contacts of its region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub vertex: usize,
    pub region: Region,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    schema: String,
    version: u32,
    joints: Vec<[f64; 3]>,
    parents: Vec<Option<usize>>,
    /// Per vertex, `[joint, weight]` pairs.
    skin_weights: Vec<Vec<(usize, f64)>>,
    /// Per face.
    regions: Vec<Region>,
    anchors: Vec<Anchor>,
    fingertips: Vec<Vec<usize>>,
    limits: Vec<AxisLimits>,
    flexion_axes: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct HandTemplate {
    mesh: TriMesh,
    joints: Vec<Point3<f64>>,
    parents: Vec<Option<usize>>,
    skin: Vec<Vec<(usize, f64)>>,
    regions: Vec<Region>,
    anchors: Vec<Anchor>,
    fingertips: Vec<Vec<usize>>,
    limits: Vec<AxisLimits>,
    flexion_axes: Vec<Vector3<f64>>,
    /// Per joint, columns are the flexion, abduction and twist axes.
    bases: Vec<Matrix3<f64>>,
}

/// Raw template pieces, checked by [`HandTemplate::new`].
#[derive(Debug, Clone)]
pub struct TemplateParts {
    pub mesh: TriMesh,
    pub joints: Vec<Point3<f64>>,
    pub parents: Vec<Option<usize>>,
    pub skin: Vec<Vec<(usize, f64)>>,
    pub regions: Vec<Region>,
    pub anchors: Vec<Anchor>,
    pub fingertips: Vec<Vec<usize>>,
    pub limits: Vec<AxisLimits>,
    pub flexion_axes: Vec<Vector3<f64>>,
}

impl HandTemplate {
    /// Validates the parts and derives the per-joint axis bases. Every
    /// violated invariant is reported.
    pub fn new(p: TemplateParts) -> Result<Self> {
        let errors = validate(&p);
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let bases = (0..JOINT_COUNT)
            .map(|j| joint_basis(&p.joints, &p.parents, j, &p.flexion_axes[j]))
            .collect();
        Ok(HandTemplate {
            mesh: p.mesh,
            joints: p.joints,
            parents: p.parents,
            skin: p.skin,
            regions: p.regions,
            anchors: p.anchors,
            fingertips: p.fingertips,
            limits: p.limits,
            flexion_axes: p.flexion_axes.iter().map(|a| a.normalize()).collect(),
            bases,
        })
    }

    /// The template shipped with the crate.
    pub fn builtin() -> &'static HandTemplate {
        static T: OnceLock<HandTemplate> = OnceLock::new();
        T.get_or_init(|| {
            HandTemplate::from_strings(BUILTIN_OBJ, BUILTIN_JSON).expect("shipped hand template is valid")
        })
    }

    /// Loads an OBJ mesh and the JSON sidecar next to it (same stem).
    pub fn load(obj_path: impl AsRef<Path>) -> Result<Self> {
        let obj_path = obj_path.as_ref();
        let json_path = obj_path.with_extension("json");
        let obj = std::fs::read_to_string(obj_path).map_err(|e| Error::io(obj_path, e))?;
        let json = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        Self::from_strings(&obj, &json)
    }

    pub fn from_strings(obj: &str, sidecar_json: &str) -> Result<Self> {
        let mesh = parse_obj(obj)?.mesh;
        let s: Sidecar = serde_json::from_str(sidecar_json)?;
        if s.schema != TEMPLATE_SCHEMA || s.version != TEMPLATE_VERSION {
            return Err(Error::Invalid(format!(
                "expected {TEMPLATE_SCHEMA} v{TEMPLATE_VERSION}, found {} v{}",
                s.schema, s.version
            )));
        }
        Self::new(TemplateParts {
            mesh,
            joints: s.joints.iter().map(|&j| Point3::from(j)).collect(),
            parents: s.parents,
            skin: s.skin_weights,
            regions: s.regions,
            anchors: s.anchors,
            fingertips: s.fingertips,
            limits: s.limits,
            flexion_axes: s.flexion_axes.iter().map(|&a| Vector3::from(a)).collect(),
        })
    }

    pub fn sidecar_json(&self) -> String {
        let s = Sidecar {
            schema: TEMPLATE_SCHEMA.into(),
            version: TEMPLATE_VERSION,
            joints: self.joints.iter().map(|j| j.coords.into()).collect(),
            parents: self.parents.clone(),
            skin_weights: self.skin.clone(),
            regions: self.regions.clone(),
            anchors: self.anchors.clone(),
            fingertips: self.fingertips.clone(),
            limits: self.limits.clone(),
            flexion_axes: self.flexion_axes.iter().map(|a| (*a).into()).collect(),
        };
        serde_json::to_string(&s).expect("sidecar serializes")
    }

    /// Writes the OBJ and its sidecar (`.json` next to it).
    pub fn save(&self, obj_path: impl AsRef<Path>) -> Result<()> {
        let obj_path = obj_path.as_ref();
        let json_path = obj_path.with_extension("json");
        std::fs::write(obj_path, obj_string(&self.mesh)).map_err(|e| Error::io(obj_path, e))?;
        std::fs::write(&json_path, self.sidecar_json()).map_err(|e| Error::io(&json_path, e))
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn joints(&self) -> &[Point3<f64>] {
        &self.joints
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn skin_weights(&self) -> &[Vec<(usize, f64)>] {
        &self.skin
    }

    pub fn face_regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn fingertips(&self) -> &[Vec<usize>] {
        &self.fingertips
    }

    pub fn limits(&self) -> &[AxisLimits] {
        &self.limits
    }

    pub fn flexion_axis(&self, joint: usize) -> Vector3<f64> {
        self.flexion_axes[joint]
    }

    /// Columns: flexion, abduction, twist axes of `joint` in the rest frame.
    pub fn basis(&self, joint: usize) -> &Matrix3<f64> {
        &self.bases[joint]
    }

    /// Blends per-joint affine maps `x -> m x + b` over the skin weights.
    pub fn skin_with(&self, transforms: &[(Matrix3<f64>, Vector3<f64>)]) -> Vec<Point3<f64>> {
        self.mesh
            .vertices()
            .iter()
            .zip(&self.skin)
            .map(|(x, w)| {
                let mut p = Vector3::zeros();
                for &(j, wj) in w {
                    let (m, b) = &transforms[j];
                    p += (m * x.coords + b) * wj;
                }
                Point3::from(p)
            })
            .collect()
    }
}

fn first_child(parents: &[Option<usize>], j: usize) -> Option<usize> {
    parents.iter().position(|&p| p == Some(j))
}

/// Twist runs along the bone leaving `j` (or arriving, for leaves); flexion
/// is the given axis made orthogonal to it; abduction completes the frame.
fn joint_basis(joints: &[Point3<f64>], parents: &[Option<usize>], j: usize, flex: &Vector3<f64>) -> Matrix3<f64> {
    let twist = match (first_child(parents, j), parents[j]) {
        (Some(c), _) => joints[c] - joints[j],
        (None, Some(p)) => joints[j] - joints[p],
        (None, None) => return Matrix3::identity(),
    };
    let Some(twist) = twist.try_normalize(1e-12) else {
        return Matrix3::identity();
    };
    let f = (flex - twist * flex.dot(&twist)).try_normalize(1e-9).unwrap_or_else(|| {
        let a = crate::mesh::shapes::least_aligned_axis(&twist);
        (a - twist * a.dot(&twist)).normalize()
    });
    let a = twist.cross(&f);
    Matrix3::from_columns(&[f, a, twist])
}

fn validate(p: &TemplateParts) -> Vec<String> {
    let mut errs = Vec::new();
    let nv = p.mesh.vertices().len();
    let nf = p.mesh.faces().len();

    if p.joints.len() != JOINT_COUNT {
        errs.push(format!("expected {JOINT_COUNT} joints, found {}", p.joints.len()));
    }
    if p.parents.len() != p.joints.len() {
        errs.push(format!("{} parents for {} joints", p.parents.len(), p.joints.len()));
    } else {
        for (j, par) in p.parents.iter().enumerate() {
            match (j, par) {
                (0, None) => {}
                (0, Some(_)) => errs.push("joint 0 (wrist) must be the root".into()),
                (_, None) => errs.push(format!("joint {j} has no parent (only the wrist may be a root)")),
                (_, Some(q)) if *q >= j => {
                    errs.push(format!("joint {j} has parent {q}; parents must precede children"))
                }
                _ => {}
            }
        }
    }
    if p.joints.iter().any(|j| !j.coords.iter().all(|c| c.is_finite())) {
        errs.push("joint positions must be finite".into());
    }

    if p.skin.len() != nv {
        errs.push(format!("skin weights for {} vertices, mesh has {nv}", p.skin.len()));
    }
    for (v, w) in p.skin.iter().enumerate() {
        if w.is_empty() || w.len() > MAX_INFLUENCES {
            errs.push(format!("vertex {v} has {} influences (1..={MAX_INFLUENCES} allowed)", w.len()));
            continue;
        }
        if w.iter().any(|&(j, wj)| j >= JOINT_COUNT || !(wj >= 0.0)) {
            errs.push(format!("vertex {v} has an invalid joint index or negative weight"));
            continue;
        }
        let sum: f64 = w.iter().map(|&(_, wj)| wj).sum();
        if (sum - 1.0).abs() > 1e-6 {
            errs.push(format!("skin weights of vertex {v} sum to {sum}"));
        }
    }

    if p.regions.len() != nf {
        errs.push(format!("{} face regions for {nf} faces", p.regions.len()));
    }
    for a in &p.anchors {
        if a.vertex >= nv {
            errs.push(format!("anchor vertex {} out of range", a.vertex));
        }
    }
    for r in Region::ALL {
        if !p.anchors.iter().any(|a| a.region == r) {
            errs.push(format!("region {r} has no anchor"));
        }
    }

    if p.fingertips.len() != FINGER_COUNT {
        errs.push(format!("expected {FINGER_COUNT} fingertip sets, found {}", p.fingertips.len()));
    }
    let mut owner = vec![usize::MAX; nv];
    for (f, set) in p.fingertips.iter().enumerate() {
        if set.is_empty() {
            errs.push(format!("fingertip set {f} is empty"));
        }
        for &v in set {
            if v >= nv {
                errs.push(format!("fingertip set {f} references vertex {v} out of range"));
            } else if owner[v] != usize::MAX && owner[v] != f {
                errs.push(format!("vertex {v} is in fingertip sets {} and {f}", owner[v]));
            } else {
                owner[v] = f;
            }
        }
    }

    if p.limits.len() != JOINT_COUNT {
        errs.push(format!("expected {JOINT_COUNT} joint limit entries, found {}", p.limits.len()));
    }
    for (j, l) in p.limits.iter().enumerate() {
        for r in l.iter().flatten() {
            if !(r[0] <= r[1]) {
                errs.push(format!("joint {j} has an empty limit range {r:?}"));
            }
        }
    }
    if p.flexion_axes.len() != JOINT_COUNT {
        errs.push(format!("expected {JOINT_COUNT} flexion axes, found {}", p.flexion_axes.len()));
    }
    for (j, a) in p.flexion_axes.iter().enumerate() {
        if !(a.norm() > 1e-9) {
            errs.push(format!("flexion axis of joint {j} is zero or not finite"));
        }
    }
    errs
}
