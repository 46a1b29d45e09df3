use std::path::Path;

use nalgebra::{Matrix3, Matrix3xX, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{exp, exp_derivatives};
use super::{HandTemplate, JOINT_COUNT, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub const POSE_SCHEMA: &str = "gcgrasp.hand_pose";
pub const POSE_VERSION: u32 = 1;

/// Global axis-angle rotation and translation (cm) plus one axis-angle
/// vector per non-wrist joint, expressed in the template's rest frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseFile", into = "PoseFile")]
pub struct HandPose {
    pub global_rot: Vector3<f64>,
    pub global_trans: Vector3<f64>,
    pub joints: Vec<Vector3<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    schema: String,
    version: u32,
    global_rot: [f64; 3],
    global_trans: [f64; 3],
    joints: Vec<[f64; 3]>,
}

impl TryFrom<PoseFile> for HandPose {
    type Error = String;

    fn try_from(f: PoseFile) -> std::result::Result<Self, String> {
        if f.schema != POSE_SCHEMA || f.version != POSE_VERSION {
            return Err(format!("expected {POSE_SCHEMA} v{POSE_VERSION}, found {} v{}", f.schema, f.version));
        }
        if f.joints.len() != JOINT_COUNT - 1 {
            return Err(format!("pose needs {} joint rotations, found {}", JOINT_COUNT - 1, f.joints.len()));
        }
        let pose = HandPose {
            global_rot: f.global_rot.into(),
            global_trans: f.global_trans.into(),
            joints: f.joints.iter().map(|&j| j.into()).collect(),
        };
        if !pose.params().iter().all(|v| v.is_finite()) {
            return Err("pose values must be finite".into());
        }
        Ok(pose)
    }
}

impl From<HandPose> for PoseFile {
    fn from(p: HandPose) -> Self {
        PoseFile {
            schema: POSE_SCHEMA.into(),
            version: POSE_VERSION,
            global_rot: p.global_rot.into(),
            global_trans: p.global_trans.into(),
            joints: p.joints.iter().map(|&j| j.into()).collect(),
        }
    }
}

impl Default for HandPose {
    fn default() -> Self {
        HandPose {
            global_rot: Vector3::zeros(),
            global_trans: Vector3::zeros(),
            joints: vec![Vector3::zeros(); JOINT_COUNT - 1],
        }
    }
}

impl HandPose {
    /// Parameter index of component `axis` of joint `joint` (1..=20).
    pub fn joint_index(joint: usize, axis: usize) -> usize {
        6 + 3 * (joint - 1) + axis
    }

    /// Flat parameter vector: rotation, translation, joints.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(PARAM_COUNT);
        p.extend(self.global_rot.iter());
        p.extend(self.global_trans.iter());
        for j in &self.joints {
            p.extend(j.iter());
        }
        p
    }

    pub fn from_params(p: &[f64]) -> Self {
        assert_eq!(p.len(), PARAM_COUNT, "pose parameter count");
        HandPose {
            global_rot: Vector3::new(p[0], p[1], p[2]),
            global_trans: Vector3::new(p[3], p[4], p[5]),
            joints: p[6..].chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
        }
    }

    /// Rotation vector of joint `joint` (1..=20).
    pub fn joint(&self, joint: usize) -> Vector3<f64> {
        self.joints[joint - 1]
    }

    pub fn joint_mut(&mut self, joint: usize) -> &mut Vector3<f64> {
        &mut self.joints[joint - 1]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A posed hand with the kinematic state needed for derivatives.
#[derive(Debug, Clone)]
pub struct PosedHand<'a> {
    template: &'a HandTemplate,
    vertices: Vec<Point3<f64>>,
    /// Skinned positions before the global transform.
    local: Vec<Point3<f64>>,
    global_dr: [Matrix3<f64>; 3],
    /// Accumulated joint transforms `x -> m x + b`.
    m: Vec<Matrix3<f64>>,
    b: Vec<Vector3<f64>>,
    /// Per joint and axis: `R_g M_parent dR_j R_j^T`.
    d: Vec<[Matrix3<f64>; 3]>,
}

/// Forward kinematics, linear blend skinning, then the global transform.
pub fn pose_hand<'a>(template: &'a HandTemplate, pose: &HandPose) -> PosedHand<'a> {
    let rg = exp(&pose.global_rot);
    let global_dr = exp_derivatives(&pose.global_rot);
    let mut m = vec![Matrix3::identity(); JOINT_COUNT];
    let mut b = vec![Vector3::zeros(); JOINT_COUNT];
    let mut d = vec![[Matrix3::zeros(); 3]; JOINT_COUNT];
    let joints = template.joints();
    for j in 1..JOINT_COUNT {
        let p = template.parents()[j].expect("non-root joints have parents");
        let theta = pose.joint(j);
        let r = exp(&theta);
        let c = joints[j].coords;
        m[j] = m[p] * r;
        b[j] = m[p] * (c - r * c) + b[p];
        let left = rg * m[p];
        let right = r.transpose();
        d[j] = exp_derivatives(&theta).map(|dr| left * dr * right);
    }

    // Written as x + sum w (T x - x) so the rest pose reproduces x exactly.
    let local: Vec<Point3<f64>> = template
        .mesh()
        .vertices()
        .iter()
        .zip(template.skin_weights())
        .map(|(x, w)| {
            let mut offset = Vector3::zeros();
            for &(k, wk) in w {
                offset += (m[k] * x.coords + b[k] - x.coords) * wk;
            }
            x + offset
        })
        .collect();
    let vertices = local.iter().map(|u| Point3::from(rg * u.coords + pose.global_trans)).collect();
    PosedHand {
        template,
        vertices,
        local,
        global_dr,
        m,
        b,
        d,
    }
}

impl PosedHand<'_> {
    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn anchors(&self) -> Vec<Point3<f64>> {
        self.template.anchors().iter().map(|a| self.vertices[a.vertex]).collect()
    }

    pub fn fingertips(&self) -> Vec<Vec<Point3<f64>>> {
        self.template
            .fingertips()
            .iter()
            .map(|set| set.iter().map(|&v| self.vertices[v]).collect())
            .collect()
    }

    pub fn mesh(&self) -> Result<TriMesh> {
        TriMesh::new(self.vertices.clone(), self.template.mesh().faces().to_vec())
    }

    /// Calls `f(param_index, d vertex / d param)` for every joint parameter
    /// that moves vertex `v`.
    fn joint_columns(&self, v: usize, mut f: impl FnMut(usize, Vector3<f64>)) {
        let parents = self.template.parents();
        let joints = self.template.joints();
        let x = self.template.mesh().vertices()[v].coords;
        for &(k, w) in &self.template.skin_weights()[v] {
            let y = self.m[k] * x + self.b[k];
            let mut j = k;
            while let Some(p) = parents[j] {
                let local = self.m[p].transpose() * (y - self.b[p]) - joints[j].coords;
                for i in 0..3 {
                    f(HandPose::joint_index(j, i), self.d[j][i] * local * w);
                }
                j = p;
            }
        }
    }

    /// Derivative of posed vertex `v` with respect to all pose parameters.
    pub fn jacobian(&self, v: usize) -> Matrix3xX<f64> {
        let mut jac = Matrix3xX::zeros(PARAM_COUNT);
        let u = self.local[v].coords;
        for i in 0..3 {
            jac.set_column(i, &(self.global_dr[i] * u));
            jac[(i, 3 + i)] = 1.0;
        }
        self.joint_columns(v, |c, col| {
            let mut dst = jac.column_mut(c);
            dst += col;
        });
        jac
    }

    /// Pulls per-vertex gradients back to the pose parameters.
    pub fn backprop(&self, vertex_grads: &[(usize, Vector3<f64>)]) -> Vec<f64> {
        let mut g = vec![0.0; PARAM_COUNT];
        for (v, gv) in vertex_grads {
            let u = self.local[*v].coords;
            for i in 0..3 {
                g[i] += gv.dot(&(self.global_dr[i] * u));
                g[3 + i] += gv[i];
            }
            self.joint_columns(*v, |c, col| g[c] += gv.dot(&col));
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::hand::rotation;

    fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> HandPose {
        let p: Vec<f64> = (0..PARAM_COUNT).map(|_| rng.random_range(-scale..scale)).collect();
        let mut pose = HandPose::from_params(&p);
        pose.global_trans *= 5.0;
        pose
    }

    #[test]
    fn zero_pose_is_the_template() {
        let t = HandTemplate::builtin();
        let posed = pose_hand(t, &HandPose::default());
        assert_eq!(posed.vertices(), t.mesh().vertices());
    }

    #[test]
    fn translation_shifts_every_vertex() {
        let t = HandTemplate::builtin();
        let pose = HandPose { global_trans: Vector3::new(1.0, 2.0, 3.0), ..HandPose::default() };
        let posed = pose_hand(t, &pose);
        for (p, x) in posed.vertices().iter().zip(t.mesh().vertices()) {
            assert_eq!(*p, x + Vector3::new(1.0, 2.0, 3.0));
        }
    }

    #[test]
    fn index_mcp_flexion_follows_the_arc() {
        let t = HandTemplate::builtin();
        let (mcp, axis) = (5, t.basis(5).column(0).into_owned());
        let mut pose = HandPose::default();
        *pose.joint_mut(mcp) = axis * FRAC_PI_2;
        let posed = pose_hand(t, &pose);
        let c = t.joints()[mcp];
        // Two-link oracle: Rodrigues rotation of the rest offset by 90°.
        for &v in &t.fingertips()[1] {
            let r = t.mesh().vertices()[v] - c;
            let expected = axis.cross(&r) + axis * axis.dot(&r);
            let got = posed.vertices()[v] - c;
            assert!((got - expected).norm() < 1e-12, "{got:?} vs {expected:?}");
            assert!((got.norm() - r.norm()).abs() < 1e-12);
        }
        // The tip curls toward the palm side.
        let tip = posed.vertices()[t.fingertips()[1][0]];
        assert!(tip.z < -5.0, "{tip:?}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let t = HandTemplate::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nv = t.mesh().vertices().len();
        for _ in 0..20 {
            let pose = random_pose(&mut rng, 0.6);
            let posed = pose_hand(t, &pose);
            let params = pose.params();
            for _ in 0..10 {
                let v = rng.random_range(0..nv);
                let jac = posed.jacobian(v);
                let mut fd = Matrix3xX::zeros(PARAM_COUNT);
                for k in 0..PARAM_COUNT {
                    let mut hi = params.clone();
                    let mut lo = params.clone();
                    hi[k] += 1e-4;
                    lo[k] -= 1e-4;
                    let a = pose_hand(t, &HandPose::from_params(&hi)).vertices()[v];
                    let b = pose_hand(t, &HandPose::from_params(&lo)).vertices()[v];
                    fd.set_column(k, &((a - b) / 2e-4));
                }
                let rel = (&jac - &fd).norm() / jac.norm();
                assert!(rel < 1e-4, "vertex {v}: relative error {rel}");
            }
        }
    }

    #[test]
    fn backprop_is_the_jacobian_transpose() {
        let t = HandTemplate::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = random_pose(&mut rng, 0.5);
        let posed = pose_hand(t, &pose);
        let grads: Vec<(usize, Vector3<f64>)> = (0..40)
            .map(|i| (i * 17 % t.mesh().vertices().len(), Vector3::new(rng.random(), rng.random(), rng.random())))
            .collect();
        let g = posed.backprop(&grads);
        let mut expected = nalgebra::DVector::zeros(PARAM_COUNT);
        for (v, gv) in &grads {
            expected += posed.jacobian(*v).transpose() * gv;
        }
        for k in 0..PARAM_COUNT {
            assert!((g[k] - expected[k]).abs() < 1e-10 * (1.0 + expected[k].abs()));
        }
    }

    #[test]
    fn global_rotation_rotates_about_the_origin() {
        let t = HandTemplate::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let mut pose = random_pose(&mut rng, 0.4);
            pose.global_trans = Vector3::zeros();
            let rot = pose.global_rot;
            pose.global_rot = Vector3::zeros();
            let unrotated = pose_hand(t, &pose);
            pose.global_rot = rot;
            let rotated = pose_hand(t, &pose);
            let r = rotation::exp(&rot);
            for (a, b) in rotated.vertices().iter().zip(unrotated.vertices()) {
                assert!((a.coords - r * b.coords).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_joint_transforms_move_the_hand_rigidly() {
        let t = HandTemplate::builtin();
        let r = rotation::exp(&Vector3::new(0.3, -0.8, 1.1));
        let shift = Vector3::new(2.0, -1.0, 0.5);
        let moved = t.skin_with(&vec![(r, shift); JOINT_COUNT]);
        for (p, x) in moved.iter().zip(t.mesh().vertices()) {
            assert!((p.coords - (r * x.coords + shift)).norm() < 1e-12);
        }
    }

    #[test]
    fn pose_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pose = random_pose(&mut rng, 1.0);
        let text = serde_json::to_string(&pose).unwrap();
        assert!(text.starts_with(r#"{"schema":"gcgrasp.hand_pose","version":1,"global_rot""#));
        let back: HandPose = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pose);
        let extra = text.replace(r#""joints":[["#, r#""joints":[[0,0,0],["#);
        assert!(serde_json::from_str::<HandPose>(&extra).is_err());
    }
}
