use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gcgrasp_core::contact::{DEFAULT_SAMPLES, DEFAULT_TAU_C};
use gcgrasp_core::gc::GcParams;
use gcgrasp_core::metrics::MetricsParams;
use gcgrasp_core::optimize::OptimizerConfig;
use gcgrasp_core::transfer::{PregParams, TransferParams};
use gcgrasp_core::{Error, Result};

pub const CONFIG_SCHEMA: &str = "gcgrasp.pipeline_config";
pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_SDF_RESOLUTION: usize = 96;

fn schema() -> String {
    CONFIG_SCHEMA.into()
}

fn version() -> u32 {
    CONFIG_VERSION
}

fn sdf_resolution() -> usize {
    DEFAULT_SDF_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcePaths {
    pub object: PathBuf,
    /// Face indices of the grasped part; the whole object when absent.
    #[serde(default)]
    pub part: Option<PathBuf>,
    pub skeleton: PathBuf,
    pub hand_pose: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPaths {
    pub object: PathBuf,
    #[serde(default)]
    pub part: Option<PathBuf>,
    pub skeleton: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    pub n_samples: usize,
    pub tau_c: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            n_samples: DEFAULT_SAMPLES,
            tau_c: DEFAULT_TAU_C,
        }
    }
}

/// One source/target pair and every stage parameter. Relative paths are
/// resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "schema")]
    pub schema: String,
    #[serde(default = "version")]
    pub version: u32,
    /// Name of the pair in batch runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub source: SourcePaths,
    pub target: TargetPaths,
    /// Template OBJ (with its JSON sidecar); the built-in hand when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_template: Option<PathBuf>,
    #[serde(default)]
    pub gc: GcParams,
    #[serde(default)]
    pub contact: ContactParams,
    #[serde(default)]
    pub transfer: TransferParams,
    #[serde(default)]
    pub preg: PregParams,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub metrics: MetricsParams,
    /// Voxels along the longest axis of the target-object SDF.
    #[serde(default = "sdf_resolution")]
    pub sdf_resolution: usize,
    /// Seeds contact sampling, registration sampling and metric sampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn with_paths(
        source_object: impl Into<PathBuf>,
        source_part: impl Into<PathBuf>,
        source_skeleton: impl Into<PathBuf>,
        source_pose: impl Into<PathBuf>,
        target_object: impl Into<PathBuf>,
        target_part: impl Into<PathBuf>,
        target_skeleton: impl Into<PathBuf>,
    ) -> Self {
        PipelineConfig {
            schema: schema(),
            version: version(),
            id: None,
            source: SourcePaths {
                object: source_object.into(),
                part: Some(source_part.into()),
                skeleton: source_skeleton.into(),
                hand_pose: source_pose.into(),
            },
            target: TargetPaths {
                object: target_object.into(),
                part: Some(target_part.into()),
                skeleton: target_skeleton.into(),
            },
            hand_template: None,
            gc: GcParams::default(),
            contact: ContactParams::default(),
            transfer: TransferParams::default(),
            preg: PregParams::default(),
            optimizer: OptimizerConfig::default(),
            metrics: MetricsParams::default(),
            sdf_resolution: DEFAULT_SDF_RESOLUTION,
            seed: 0,
            output_dir: None,
        }
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        Ok(serde_json::from_value(value)?)
    }

    /// Every problem with the parameters, in one error.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.schema != CONFIG_SCHEMA || self.version != CONFIG_VERSION {
            problems.push(format!(
                "expected {CONFIG_SCHEMA} v{CONFIG_VERSION}, found {} v{}",
                self.schema, self.version
            ));
        }
        let mut absorb = |r: Result<()>| match r {
            Ok(()) => {}
            Err(Error::Validation(v)) => problems.extend(v),
            Err(e) => problems.push(e.to_string()),
        };
        absorb(self.gc.validate());
        absorb(self.optimizer.validate());
        if self.contact.n_samples == 0 {
            problems.push("contact.n_samples must be >= 1".into());
        }
        if !(self.contact.tau_c > 0.0 && self.contact.tau_c.is_finite()) {
            problems.push(format!("contact.tau_c must be positive, got {}", self.contact.tau_c));
        }
        if !self.transfer.phi_offset.is_finite() {
            problems.push("transfer.phi_offset must be finite".into());
        }
        if self.metrics.pv_resolution == 0 || self.metrics.n_samples == 0 {
            problems.push("metrics.pv_resolution and metrics.n_samples must be >= 1".into());
        }
        if !(self.metrics.tau_c >= 0.0 && self.metrics.tau_c.is_finite()) {
            problems.push(format!("metrics.tau_c must be finite and >= 0, got {}", self.metrics.tau_c));
        }
        if !(16..=512).contains(&self.sdf_resolution) {
            problems.push(format!("sdf_resolution must lie in [16, 512], got {}", self.sdf_resolution));
        }
        if self.preg.samples < 3 || self.preg.max_iterations == 0 {
            problems.push("preg.samples must be >= 3 and preg.max_iterations >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// A validated config plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl Resolved {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        Self::new(PipelineConfig::from_value(value)?, base_of(path))
    }

    pub fn new(config: PipelineConfig, base_dir: PathBuf) -> Result<Self> {
        config.validate()?;
        Ok(Resolved { config, base_dir })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Replaces the seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path(self.config.output_dir.as_deref().unwrap_or(Path::new("out")))
    }

    pub fn preg_params(&self) -> PregParams {
        PregParams {
            seed: self.config.seed,
            ..self.config.preg
        }
    }

    pub fn metrics_params(&self) -> MetricsParams {
        MetricsParams {
            seed: self.config.seed,
            ..self.config.metrics
        }
    }
}

pub fn base_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "source": {"object": "a.obj", "skeleton": "a.json", "hand_pose": "p.json"},
            "target": {"object": "b.obj", "skeleton": "b.json"}
        })
    }

    #[test]
    fn defaults_fill_a_minimal_config() {
        let c = PipelineConfig::from_value(minimal()).unwrap();
        assert_eq!(c.gc.n, 30);
        assert_eq!(c.optimizer.iterations, 1000);
        assert_eq!(c.contact.n_samples, 5000);
        c.validate().unwrap();
    }

    #[test]
    fn small_n_is_a_validation_error() {
        let mut v = minimal();
        v["gc"] = serde_json::json!({"n": 2});
        v["sdf_resolution"] = serde_json::json!(8);
        let c = PipelineConfig::from_value(v).unwrap();
        match c.validate() {
            Err(Error::Validation(p)) => {
                assert_eq!(p.len(), 2, "{p:?}");
                assert!(p[0].contains("gc.n"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = minimal();
        v["sed"] = serde_json::json!(3);
        assert!(PipelineConfig::from_value(v).is_err());
    }

    #[test]
    fn paths_resolve_against_the_config_directory() {
        let r = Resolved::new(PipelineConfig::from_value(minimal()).unwrap(), PathBuf::from("/data/pair")).unwrap();
        assert_eq!(r.path(Path::new("a.obj")), PathBuf::from("/data/pair/a.obj"));
        assert_eq!(r.path(Path::new("/abs/b.obj")), PathBuf::from("/abs/b.obj"));
        assert_eq!(r.output_dir(), PathBuf::from("/data/pair/out"));
        assert_eq!(base_of(Path::new("config.json")), PathBuf::from("."));
    }
}
