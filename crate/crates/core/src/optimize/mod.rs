//! Grasp pose synthesis: Adam on the weighted sum of contact consistency,
//! anatomical and interpenetration energies, starting from the source pose.

mod losses;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use losses::{consistency, interpenetration, loss_anatomical, loss_consistency, loss_interpenetration, Consistency};

use crate::contact::ContactMap;
use crate::error::{Error, Result};
use crate::hand::{pose_hand, HandPose, HandTemplate, PARAM_COUNT};
use crate::mesh::SdfGrid;

pub const LOSS_REPORT_SCHEMA: &str = "gcgrasp.loss_report";
pub const LOSS_REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub iterations: usize,
    /// Step size for the global translation (cm).
    pub lr_translation: f64,
    /// Step size for the global and joint rotations (rad).
    pub lr_rotation: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub w_consis: f64,
    pub w_anat: f64,
    pub w_intp: f64,
    /// Softmin temperature over same-region anchors (cm^2).
    pub softmin_temperature: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations: 1000,
            lr_translation: 1e-2,
            lr_rotation: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            w_consis: 1.0,
            w_anat: 1.0,
            w_intp: 1.0,
            softmin_temperature: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.iterations == 0 {
            errors.push("iterations must be >= 1".to_string());
        }
        let positive = [
            ("lr_translation", self.lr_translation),
            ("lr_rotation", self.lr_rotation),
            ("epsilon", self.epsilon),
            ("softmin_temperature", self.softmin_temperature),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                errors.push(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                errors.push(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        for (name, v) in [("w_consis", self.w_consis), ("w_anat", self.w_anat), ("w_intp", self.w_intp)] {
            if !(v.is_finite() && v >= 0.0) {
                errors.push(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }
}

/// Term values at one iterate. `total` is the weighted sum of the three
/// reported (hard-min) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(rename = "E_consis")]
    pub e_consis: f64,
    #[serde(rename = "E_anat")]
    pub e_anat: f64,
    #[serde(rename = "E_intp")]
    pub e_intp: f64,
    pub total: f64,
    pub best_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub config: OptimizerConfig,
    pub history: Vec<IterationRecord>,
    pub iterations: usize,
    pub best_iteration: usize,
    /// The best total did not move by more than 1e-6 relative over the last
    /// tenth of the run.
    pub converged: bool,
    pub final_pose: HandPose,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportFile {
    schema: String,
    version: u32,
    #[serde(flatten)]
    report: LossReport,
}

impl LossReport {
    pub fn best(&self) -> &IterationRecord {
        &self.history[self.best_iteration]
    }

    pub fn first(&self) -> &IterationRecord {
        &self.history[0]
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ReportFile {
            schema: LOSS_REPORT_SCHEMA.into(),
            version: LOSS_REPORT_VERSION,
            report: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ReportFile = serde_json::from_str(text)?;
        if file.schema != LOSS_REPORT_SCHEMA || file.version != LOSS_REPORT_VERSION {
            return Err(Error::Invalid(format!("unsupported loss report {} v{}", file.schema, file.version)));
        }
        Ok(file.report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Everything the optimizer needs at one iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub record: IterationRecord,
    /// Gradient of the optimized objective (softmin consistency).
    pub gradient: Vec<f64>,
}

/// Evaluates all terms and the combined gradient at `pose`.
pub fn evaluate(
    pose: &HandPose,
    template: &HandTemplate,
    map: &ContactMap,
    sdf: &SdfGrid,
    config: &OptimizerConfig,
    iteration: usize,
) -> Result<Evaluation> {
    let posed = pose_hand(template, pose);
    let anchors = posed.anchors();
    let regions: Vec<_> = template.anchors().iter().map(|a| a.region).collect();
    let c = consistency(&anchors, &regions, map, config.softmin_temperature);
    let (e_intp, intp_grads) = interpenetration(posed.vertices(), sdf);
    let (e_anat, anat_grad) = loss_anatomical(pose, template);

    for (term, v) in [("E_consis", c.smooth), ("E_anat", e_anat), ("E_intp", e_intp)] {
        if !v.is_finite() {
            return Err(Error::NonFinite { term, iteration });
        }
    }

    let mut vertex_grads: Vec<_> = template
        .anchors()
        .iter()
        .zip(&c.anchor_grads)
        .map(|(a, g)| (a.vertex, g * config.w_consis))
        .collect();
    vertex_grads.extend(intp_grads.into_iter().map(|(v, g)| (v, g * config.w_intp)));
    let mut gradient = posed.backprop(&vertex_grads);
    for (g, a) in gradient.iter_mut().zip(&anat_grad) {
        *g += config.w_anat * a;
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { term: "gradient", iteration });
    }
    let total = config.w_consis * c.value + config.w_anat * e_anat + config.w_intp * e_intp;
    Ok(Evaluation {
        record: IterationRecord {
            iteration,
            e_consis: c.value,
            e_anat,
            e_intp,
            total,
            best_total: total,
        },
        gradient,
    })
}

/// Adam state with one step size per parameter.
struct Adam {
    lr: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
}

impl Adam {
    fn new(config: &OptimizerConfig) -> Self {
        let mut lr = vec![config.lr_rotation; PARAM_COUNT];
        lr[3..6].fill(config.lr_translation);
        Adam {
            lr,
            m: vec![0.0; PARAM_COUNT],
            v: vec![0.0; PARAM_COUNT],
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr[i] * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Runs `config.iterations` Adam steps and returns the report with the best
/// pose seen (lowest total).
pub fn optimize_pose(
    init: &HandPose,
    template: &HandTemplate,
    map: &ContactMap,
    sdf: &SdfGrid,
    config: &OptimizerConfig,
) -> Result<LossReport> {
    config.validate()?;
    if map.points.is_empty() {
        return Err(Error::Invalid("target contact map is empty".into()));
    }
    let mut params = init.params();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Invalid("initial pose has non-finite parameters".into()));
    }
    let mut adam = Adam::new(config);
    let mut history = Vec::with_capacity(config.iterations);
    let mut best = (f64::INFINITY, 0, params.clone());
    for it in 0..config.iterations {
        let pose = HandPose::from_params(&params);
        let eval = evaluate(&pose, template, map, sdf, config, it)?;
        let mut record = eval.record;
        if record.total < best.0 {
            best = (record.total, it, params.clone());
        }
        record.best_total = best.0;
        history.push(record);
        adam.step(&mut params, &eval.gradient);
    }
    let window = (config.iterations / 10).max(10);
    let converged = history.len() > window && {
        let before = history[history.len() - 1 - window].best_total;
        let now = best.0;
        before - now <= 1e-6 * (1.0 + now.abs())
    };
    log::info!(
        "optimized {} iterations: total {:.6} -> {:.6} (best at {})",
        config.iterations,
        history[0].total,
        best.0,
        best.1
    );
    Ok(LossReport {
        config: config.clone(),
        history,
        iterations: config.iterations,
        best_iteration: best.1,
        converged,
        final_pose: HandPose::from_params(&best.2),
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::{Point3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::contact::ContactPoint;
    use crate::hand::{PosedHand, JOINT_COUNT};
    use crate::mesh::{build_sdf, shapes};

    fn template() -> &'static HandTemplate {
        HandTemplate::builtin()
    }

    /// Contact map made of the posed anchors themselves.
    fn anchor_map(posed: &PosedHand) -> ContactMap {
        let t = template();
        ContactMap {
            tau_c: 0.2,
            n_samples: 100,
            points: posed
                .anchors()
                .iter()
                .zip(t.anchors())
                .map(|(p, a)| ContactPoint {
                    position: *p,
                    region: a.region,
                    weight: 1.0,
                    gc: None,
                    fallback: false,
                })
                .collect(),
        }
    }

    fn far_sdf() -> SdfGrid {
        let ball = shapes::icosphere(1.0, 2).map_vertices(|p| p + Vector3::new(100.0, 0.0, 0.0)).unwrap();
        build_sdf(&ball, 16).unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> HandPose {
        let mut pose = HandPose {
            global_rot: Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
            global_trans: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            ..HandPose::default()
        };
        for j in 1..JOINT_COUNT {
            *pose.joint_mut(j) = Vector3::from_fn(|_, _| rng.random_range(-0.6..0.6));
        }
        pose
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / norm.max(1e-12)
    }

    fn central_difference(f: impl Fn(&HandPose) -> f64, pose: &HandPose, h: f64) -> Vec<f64> {
        let p = pose.params();
        (0..PARAM_COUNT)
            .map(|i| {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[i] += h;
                b[i] -= h;
                (f(&HandPose::from_params(&a)) - f(&HandPose::from_params(&b))) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn consistency_gradient_matches_finite_differences() {
        let t = template();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = pose_hand(t, &random_pose(&mut rng));
        let mut map = anchor_map(&target);
        for c in &mut map.points {
            c.position += Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            c.weight = rng.random_range(0.2..1.0);
        }
        for _ in 0..10 {
            let pose = random_pose(&mut rng);
            let (_, _, g) = loss_consistency(&pose_hand(t, &pose), t, &map, 0.01);
            let fd = central_difference(|p| loss_consistency(&pose_hand(t, p), t, &map, 0.01).1, &pose, 1e-6);
            assert!(rel_err(&g, &fd) < 1e-4, "{}", rel_err(&g, &fd));
        }
    }

    #[test]
    fn anatomical_gradient_matches_finite_differences() {
        let t = template();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tested = 0;
        while tested < 10 {
            let pose = random_pose(&mut rng);
            // Skip poses within the step of a hinge.
            let near_hinge = (1..JOINT_COUNT).any(|j| {
                let alpha = t.basis(j).transpose() * pose.joint(j);
                t.limits()[j]
                    .iter()
                    .enumerate()
                    .any(|(k, l)| l.is_some_and(|[lo, hi]| (alpha[k] - lo).abs() < 1e-4 || (alpha[k] - hi).abs() < 1e-4))
            });
            if near_hinge {
                continue;
            }
            let (value, g) = loss_anatomical(&pose, t);
            assert!(value > 0.0);
            let fd = central_difference(|p| loss_anatomical(p, t).0, &pose, 1e-6);
            assert!(rel_err(&g, &fd) < 1e-4, "{}", rel_err(&g, &fd));
            tested += 1;
        }
    }

    #[test]
    fn interpenetration_gradient_matches_finite_differences() {
        let t = template();
        // A slab through the palm and the proximal fingers.
        let slab = shapes::box_mesh(Vector3::new(12.0, 6.0, 1.5)).map_vertices(|p| p + Vector3::new(0.0, 8.0, 0.0)).unwrap();
        let sdf = build_sdf(&slab, 64).unwrap();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tested = 0;
        while tested < 10 {
            let mut pose = random_pose(&mut rng);
            pose.global_trans *= 0.3;
            let posed = pose_hand(t, &pose);
            let (value, g) = loss_interpenetration(&posed, &sdf);
            if value == 0.0 {
                continue;
            }
            // Reject poses where any parameter step moves a vertex across a
            // cell face or the zero level.
            let base: Vec<_> = posed.vertices().iter().map(|v| (sdf.cell_of(v), sdf.query(v).value < 0.0)).collect();
            let p = pose.params();
            let stable = (0..PARAM_COUNT).all(|i| {
                [h, -h].iter().all(|d| {
                    let mut q = p.clone();
                    q[i] += d;
                    let moved = pose_hand(t, &HandPose::from_params(&q));
                    moved.vertices().iter().zip(&base).all(|(v, b)| (sdf.cell_of(v), sdf.query(v).value < 0.0) == *b)
                })
            });
            if !stable {
                continue;
            }
            let fd = central_difference(|p| loss_interpenetration(&pose_hand(t, p), &sdf).0, &pose, h);
            assert!(rel_err(&g, &fd) < 1e-3, "{}", rel_err(&g, &fd));
            tested += 1;
        }
    }

    #[test]
    fn optimal_init_is_a_fixed_point() {
        let t = template();
        let mut init = HandPose::default();
        *init.joint_mut(6) = t.basis(6).column(0) * 0.5;
        let map = anchor_map(&pose_hand(t, &init));
        let config = OptimizerConfig { iterations: 50, ..Default::default() };
        let report = optimize_pose(&init, t, &map, &far_sdf(), &config).unwrap();
        for (a, b) in report.final_pose.params().iter().zip(init.params()) {
            assert!((a - b).abs() < 1e-3);
        }
        assert_eq!(report.first().total, 0.0);
    }

    #[test]
    fn displaced_hand_returns_to_its_contacts() {
        let t = template();
        // Cylinder along x under the palm; the goal anchors are the contacts.
        let cylinder = shapes::cylinder_between(Point3::new(-8.0, 7.0, -7.0), Point3::new(8.0, 7.0, -7.0), 2.0, 48, 8);
        let sdf = build_sdf(&cylinder, 64).unwrap();
        let goal = HandPose::default();
        assert_eq!(loss_interpenetration(&pose_hand(t, &goal), &sdf).0, 0.0);
        let map = anchor_map(&pose_hand(t, &goal));
        let init = HandPose {
            global_trans: Vector3::new(0.0, 0.0, 3.0),
            ..goal
        };
        let report = optimize_pose(&init, t, &map, &sdf, &OptimizerConfig::default()).unwrap();
        let first = report.first().e_consis;
        let last = report.best().e_consis;
        assert!(last <= 0.1 * first, "{first} -> {last}");
        for w in report.history.windows(2) {
            assert!(w[1].best_total <= w[0].best_total);
        }
    }

    #[test]
    fn reports_are_deterministic_and_round_trip() {
        let t = template();
        let mut init = HandPose::default();
        init.global_trans.x = 0.5;
        let map = anchor_map(&pose_hand(t, &HandPose::default()));
        let config = OptimizerConfig { iterations: 30, ..Default::default() };
        let a = optimize_pose(&init, t, &map, &far_sdf(), &config).unwrap();
        let b = optimize_pose(&init, t, &map, &far_sdf(), &config).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(LossReport::from_json(&a.to_json().unwrap()).unwrap(), a);
        for r in &a.history {
            assert_eq!(r.total, r.e_consis + r.e_anat + r.e_intp);
        }
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let config = OptimizerConfig {
            iterations: 0,
            lr_rotation: -1.0,
            w_anat: f64::NAN,
            ..Default::default()
        };
        match config.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_contacts_name_the_term() {
        let t = template();
        let mut map = anchor_map(&pose_hand(t, &HandPose::default()));
        map.points[0].position.x = f64::NAN;
        let err = optimize_pose(&HandPose::default(), t, &map, &far_sdf(), &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { term: "E_consis", iteration: 0 }), "{err:?}");
    }
}
