//! Synthetic grasp scenes: a template hand closed around a cylinder, and a
//! thicker target cylinder to transfer the grasp onto.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};

use gcgrasp_core::gc::Skeleton;
use gcgrasp_core::hand::{pose_hand, HandPose, HandTemplate};
use gcgrasp_core::mesh::{build_sdf, shapes, write_obj, SdfGrid, TriMesh};
use gcgrasp_core::Result;

use crate::config::PipelineConfig;
use crate::io::write_json;

/// Flexion chains closed in order, proximal joint first.
const CHAINS: [[usize; 3]; 5] = [[5, 6, 7], [9, 10, 11], [13, 14, 15], [17, 18, 19], [1, 2, 3]];
const STEP_DEG: f64 = 1.0;
/// Gap kept between the closed hand and the object surface (cm).
pub const CLEARANCE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct CylinderSpec {
    pub radius: f64,
    pub length: f64,
    /// Point on the axis at mid-length; the axis runs along x.
    pub center: Point3<f64>,
}

impl CylinderSpec {
    pub fn mesh(&self) -> TriMesh {
        let half = Vector3::new(self.length / 2.0, 0.0, 0.0);
        shapes::cylinder_between(self.center - half, self.center + half, self.radius, 64, 29)
    }

    pub fn skeleton(&self) -> Skeleton {
        let half = Vector3::new(self.length / 2.0, 0.0, 0.0);
        Skeleton::new(vec![self.center - half, self.center + half]).expect("distinct end points")
    }
}

#[derive(Debug, Clone)]
pub struct GraspScene {
    pub source: CylinderSpec,
    pub target: CylinderSpec,
    pub source_pose: HandPose,
}

/// Source cylinder under the palm (top surface just below it), target
/// cylinder of radius `target_radius` sharing that top line.
pub fn cylinder_scene(source_radius: f64, target_radius: f64) -> Result<GraspScene> {
    let top = -1.45;
    let source = CylinderSpec {
        radius: source_radius,
        length: 14.0,
        center: Point3::new(0.0, 7.0, top - source_radius),
    };
    let target = CylinderSpec {
        radius: target_radius,
        center: Point3::new(0.0, 7.0, top - target_radius),
        ..source.clone()
    };
    let template = HandTemplate::builtin();
    let sdf = build_sdf(&source.mesh(), 96)?;
    let source_pose = close_hand(template, &HandPose::default(), &sdf, CLEARANCE);
    Ok(GraspScene {
        source,
        target,
        source_pose,
    })
}

/// The usual fixture: radius 2 onto radius 3.
pub fn default_scene() -> Result<GraspScene> {
    cylinder_scene(2.0, 3.0)
}

fn min_sdf(template: &HandTemplate, pose: &HandPose, sdf: &SdfGrid) -> f64 {
    pose_hand(template, pose)
        .vertices()
        .iter()
        .map(|v| sdf.query(v).value)
        .fold(f64::INFINITY, f64::min)
}

/// Smallest thumb base rotation (flexion, abduction) that clears the
/// object, searched on a grid within the joint limits.
fn open_thumb(template: &HandTemplate, start: &HandPose, sdf: &SdfGrid, clearance: f64) -> HandPose {
    const CMC: usize = 1;
    if min_sdf(template, start, sdf) >= clearance {
        return start.clone();
    }
    let basis = *template.basis(CMC);
    let limits = template.limits()[CMC];
    let range = |k: usize| {
        let [lo, hi] = limits[k].unwrap_or([0.0, 0.0]);
        let steps = ((hi - lo) / STEP_DEG.to_radians()).round() as i64;
        (0..=steps).map(move |i| lo + (hi - lo) * i as f64 / steps.max(1) as f64)
    };
    let mut best: Option<(f64, HandPose)> = None;
    for flex in range(0) {
        for abd in range(1) {
            let norm = flex.hypot(abd);
            if best.as_ref().is_some_and(|(n, _)| *n <= norm) {
                continue;
            }
            let mut trial = start.clone();
            *trial.joint_mut(CMC) = basis.column(0) * flex + basis.column(1) * abd;
            if min_sdf(template, &trial, sdf) >= clearance {
                best = Some((norm, trial));
            }
        }
    }
    best.map_or_else(|| start.clone(), |(_, p)| p)
}

/// Opens the thumb if it starts inside the object, then flexes each finger
/// joint in turn, proximal first, until the hand comes within `clearance`
/// of the object or the joint limit is reached.
pub fn close_hand(template: &HandTemplate, start: &HandPose, sdf: &SdfGrid, clearance: f64) -> HandPose {
    let mut pose = open_thumb(template, start, sdf, clearance);
    let step = STEP_DEG.to_radians();
    for chain in CHAINS {
        for j in chain {
            let axis = template.basis(j).column(0).into_owned();
            let Some([_, hi]) = template.limits()[j][0] else { continue };
            loop {
                let current = pose.joint(j);
                if axis.dot(&current) + step > hi {
                    break;
                }
                let mut trial = pose.clone();
                *trial.joint_mut(j) = current + axis * step;
                if min_sdf(template, &trial, sdf) < clearance {
                    break;
                }
                pose = trial;
            }
        }
    }
    pose
}

/// Paths of a scene written to disk.
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
}

/// Writes both objects (each is its own single part), skeletons, the source
/// pose and a pipeline config referencing them with relative paths.
pub fn write_scene(scene: &GraspScene, dir: &Path, configure: impl FnOnce(&mut PipelineConfig)) -> Result<SceneFiles> {
    std::fs::create_dir_all(dir).map_err(|e| gcgrasp_core::Error::io(dir, e))?;
    for (name, spec) in [("source", &scene.source), ("target", &scene.target)] {
        let mesh = spec.mesh();
        write_obj(dir.join(format!("{name}_object.obj")), &mesh)?;
        let faces: String = (0..mesh.faces().len()).map(|f| format!("{f}\n")).collect();
        let part = dir.join(format!("{name}_part.txt"));
        std::fs::write(&part, faces).map_err(|e| gcgrasp_core::Error::io(&part, e))?;
        write_json(&dir.join(format!("{name}_skeleton.json")), &spec.skeleton())?;
    }
    write_json(&dir.join("source_pose.json"), &scene.source_pose)?;
    let mut config = PipelineConfig::with_paths("source_object.obj", "source_part.txt", "source_skeleton.json", "source_pose.json", "target_object.obj", "target_part.txt", "target_skeleton.json");
    config.output_dir = Some("out".into());
    configure(&mut config);
    let path = dir.join("config.json");
    write_json(&path, &config)?;
    Ok(SceneFiles {
        dir: dir.to_path_buf(),
        config: path,
    })
}
