//! The pipeline stages. Each stage reads its inputs from the config and the
//! artifacts of earlier stages in the output directory.
//!
//! Layout of an output directory:
//!
//! ```text
//! source_gc.json  source_gc.obj  target_gc.json  target_gc.obj
//! source_object_r96.sdf  target_object_r96.sdf
//! source_contacts.json  source_contacts.obj        (per method)
//! transfer.json  target_contacts.json  target_contacts.obj
//! pose.json  loss_report.json  posed_hand.obj
//! metrics.json  source_metrics.json  metrics.csv
//! timing.json
//! ```
//!
//! The baseline writes its per-method files under `preg/`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gcgrasp_core::contact::{extract_contact_map, lift_to_gc, ContactMap};
use gcgrasp_core::gc::{build_gc, GeneralizedCylinder, Skeleton};
use gcgrasp_core::hand::{pose_hand, HandPose, HandTemplate};
use gcgrasp_core::mesh::{build_sdf, load_obj, write_obj, SdfGrid, TriMesh};
use gcgrasp_core::metrics::{evaluate_grasp, MetricsReport};
use gcgrasp_core::optimize::{optimize_pose, LossReport};
use gcgrasp_core::transfer::{transfer_contact, transfer_preg_baseline, TransferResult};
use gcgrasp_core::{Error, Result};

use crate::config::{base_of, PipelineConfig, Resolved};
use crate::io::{load_part, write_json, write_points_obj};
use crate::CliError;

pub const TIMING_SCHEMA: &str = "gcgrasp.timing";
pub const TIMING_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "GCGRASP_THREADS";
const GC_SURFACE_RINGS: usize = 64;
const POINT_MARKER_SIZE: f64 = 0.05;

/// Directory for the per-method artifacts.
pub fn method_dir(out: &Path, preg: bool) -> PathBuf {
    if preg {
        out.join("preg")
    } else {
        out.to_path_buf()
    }
}

fn object(cfg: &Resolved, path: &Path) -> Result<TriMesh> {
    Ok(load_obj(cfg.path(path))?.mesh)
}

fn part(cfg: &Resolved, object: &TriMesh, part: Option<&Path>) -> Result<TriMesh> {
    match part {
        Some(p) => load_part(&cfg.path(p), object),
        None => Ok(object.clone()),
    }
}

fn template(cfg: &Resolved) -> Result<HandTemplate> {
    match &cfg.config.hand_template {
        Some(p) => HandTemplate::load(cfg.path(p)),
        None => Ok(HandTemplate::builtin().clone()),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// SDF of an object, cached in `out` by name and resolution.
fn cached_sdf(out: &Path, name: &str, mesh: &TriMesh, resolution: usize) -> Result<SdfGrid> {
    let path = out.join(format!("{name}_r{resolution}.sdf"));
    if path.exists() {
        return SdfGrid::load(&path);
    }
    let sdf = build_sdf(mesh, resolution)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    sdf.save(&path)?;
    Ok(sdf)
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct TimingFile {
    schema: String,
    version: u32,
    stages: serde_json::Map<String, serde_json::Value>,
}

/// Wall times live apart from the artifacts so those stay reproducible.
fn record_timing(dir: &Path, stage: &str, value: serde_json::Value) -> Result<()> {
    let path = dir.join("timing.json");
    let mut file: TimingFile = read_json(&path).unwrap_or_default();
    file.schema = TIMING_SCHEMA.into();
    file.version = TIMING_VERSION;
    file.stages.insert(stage.into(), value);
    write_json(&path, &file)
}

pub struct GcBuildOutput {
    pub source: GeneralizedCylinder,
    pub target: GeneralizedCylinder,
}

fn build_one(cfg: &Resolved, out: &Path, name: &str, obj: &Path, part_file: Option<&Path>, skeleton: &Path) -> Result<GeneralizedCylinder> {
    let mesh = object(cfg, obj)?;
    let part_mesh = part(cfg, &mesh, part_file)?;
    let skeleton = Skeleton::load(cfg.path(skeleton))?;
    let gc = build_gc(&part_mesh, &skeleton, &cfg.config.gc).inspect_err(|e| log::error!("{name} cylinder: {e}"))?;
    write_json(&out.join(format!("{name}_gc.json")), &gc)?;
    write_obj(out.join(format!("{name}_gc.obj")), &gc.surface_mesh(GC_SURFACE_RINGS, cfg.config.gc.m)?)?;
    Ok(gc)
}

/// Builds and writes both cylinders.
pub fn gc_build(cfg: &Resolved, out: &Path) -> Result<GcBuildOutput> {
    let c = &cfg.config;
    let source = build_one(cfg, out, "source", &c.source.object, c.source.part.as_deref(), &c.source.skeleton)?;
    let target = build_one(cfg, out, "target", &c.target.object, c.target.part.as_deref(), &c.target.skeleton)?;
    Ok(GcBuildOutput { source, target })
}

fn load_or_build_gcs(cfg: &Resolved, out: &Path) -> Result<(GeneralizedCylinder, GeneralizedCylinder)> {
    let (s, t) = (out.join("source_gc.json"), out.join("target_gc.json"));
    if s.exists() && t.exists() {
        return Ok((read_json(&s)?, read_json(&t)?));
    }
    log::info!("cylinders missing in {}; building them", out.display());
    let built = gc_build(cfg, out)?;
    Ok((built.source, built.target))
}

/// Extracts the source contact map and carries it to the target part.
pub fn transfer(cfg: &Resolved, out: &Path, preg: bool) -> Result<TransferResult> {
    let c = &cfg.config;
    let dir = method_dir(out, preg);
    let template = template(cfg)?;
    let pose = HandPose::load(cfg.path(&c.source.hand_pose))?;
    let src_object = object(cfg, &c.source.object)?;
    let src_part = part(cfg, &src_object, c.source.part.as_deref())?;
    let hand = pose_hand(&template, &pose).mesh()?;

    let clock = Instant::now();
    let map = extract_contact_map(&src_part, &hand, template.face_regions(), c.contact.n_samples, c.contact.tau_c, c.seed)?;
    let extract_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (source_map, result) = if preg {
        let tgt_object = object(cfg, &c.target.object)?;
        let tgt_part = part(cfg, &tgt_object, c.target.part.as_deref())?;
        let result = transfer_preg_baseline(&map, &src_part, &tgt_part, &cfg.preg_params())?;
        (map, result)
    } else {
        let (src_gc, tgt_gc) = load_or_build_gcs(cfg, out)?;
        let lifted = lift_to_gc(&map, &src_gc, &src_part)?;
        if lifted.dropped > 0 {
            log::warn!("{} contact(s) too far from the source cylinder were dropped", lifted.dropped);
        }
        let result = transfer_contact(&lifted.map, &src_gc, &tgt_gc, &c.transfer)?;
        (lifted.map, result)
    };
    let transfer_seconds = clock.elapsed().as_secs_f64();

    write_json(&dir.join("source_contacts.json"), &source_map)?;
    write_json(&dir.join("transfer.json"), &result)?;
    write_json(&dir.join("target_contacts.json"), &result.target_map)?;
    let positions = |m: &ContactMap| m.points.iter().map(|p| p.position).collect::<Vec<_>>();
    write_points_obj(&dir.join("source_contacts.obj"), &positions(&source_map), POINT_MARKER_SIZE)?;
    write_points_obj(&dir.join("target_contacts.obj"), &positions(&result.target_map), POINT_MARKER_SIZE)?;
    record_timing(
        &dir,
        "transfer",
        serde_json::json!({
            "n_samples": c.contact.n_samples,
            "contacts": result.target_map.points.len(),
            "extract_seconds": extract_seconds,
            "transfer_seconds": transfer_seconds,
        }),
    )?;
    Ok(result)
}

/// Optimizes the source pose against the transferred contacts.
pub fn optimize(cfg: &Resolved, out: &Path, preg: bool) -> Result<LossReport> {
    let c = &cfg.config;
    let dir = method_dir(out, preg);
    let template = template(cfg)?;
    let init = HandPose::load(cfg.path(&c.source.hand_pose))?;
    let map = ContactMap::load(dir.join("target_contacts.json"))?;
    let tgt_object = object(cfg, &c.target.object)?;
    let sdf = cached_sdf(out, "target_object", &tgt_object, c.sdf_resolution)?;

    let clock = Instant::now();
    let report = optimize_pose(&init, &template, &map, &sdf, &c.optimizer)?;
    let seconds = clock.elapsed().as_secs_f64();

    write_json(&dir.join("pose.json"), &report.final_pose)?;
    let path = dir.join("loss_report.json");
    std::fs::write(&path, report.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
    write_obj(dir.join("posed_hand.obj"), &pose_hand(&template, &report.final_pose).mesh()?)?;
    record_timing(&dir, "optimize", serde_json::json!({ "iterations": report.iterations, "seconds": seconds }))?;
    Ok(report)
}

pub struct MetricsOutput {
    pub target: MetricsReport,
    pub source: MetricsReport,
    pub flags: Vec<String>,
}

fn grasp_metrics(cfg: &Resolved, template: &HandTemplate, pose: &HandPose, obj: &TriMesh, sdf: &SdfGrid) -> Result<MetricsReport> {
    let posed = pose_hand(template, pose);
    evaluate_grasp(&posed.mesh()?, &posed.fingertips(), obj, sdf, &cfg.metrics_params())
}

fn flags(dir: &Path) -> Vec<String> {
    let mut flags = Vec::new();
    if let Ok(t) = TransferResult::load(dir.join("transfer.json")) {
        if t.target_too_short() {
            flags.push("target_too_short".into());
        }
        if t.clamped_count() > 0 {
            flags.push(format!("clamped:{}", t.clamped_count()));
        }
        if t.fallback_count() > 0 {
            flags.push(format!("fallback:{}", t.fallback_count()));
        }
        if t.registration.is_some_and(|r| r.diverged) {
            flags.push("icp_diverged".into());
        }
    }
    if let Ok(r) = LossReport::load(&dir.join("loss_report.json")) {
        if !r.converged {
            flags.push("not_converged".into());
        }
    }
    flags
}

/// Metrics of the optimized grasp on the target object and of the source
/// grasp on the source object.
pub fn metrics(cfg: &Resolved, out: &Path, preg: bool) -> std::result::Result<MetricsOutput, CliError> {
    let c = &cfg.config;
    let dir = method_dir(out, preg);
    let template = template(cfg)?;
    let pose = HandPose::load(dir.join("pose.json"))?;
    let tgt_object = object(cfg, &c.target.object)?;
    let tgt_sdf = cached_sdf(out, "target_object", &tgt_object, c.sdf_resolution)?;
    let target = grasp_metrics(cfg, &template, &pose, &tgt_object, &tgt_sdf)?;

    let src_pose = HandPose::load(cfg.path(&c.source.hand_pose))?;
    let src_object = object(cfg, &c.source.object)?;
    let src_sdf = cached_sdf(out, "source_object", &src_object, c.sdf_resolution)?;
    let source = grasp_metrics(cfg, &template, &src_pose, &src_object, &src_sdf)?;

    write_json(&dir.join("metrics.json"), &target)?;
    write_json(&dir.join("source_metrics.json"), &source)?;
    let flags = flags(&dir);
    let row = BatchRow::ok(c.id.clone().unwrap_or_else(|| "pair".into()), &target, &flags);
    write_rows(&dir.join("metrics.csv"), &[row])?;
    Ok(MetricsOutput { target, source, flags })
}

/// Runs every stage for one pair.
pub fn run_all(cfg: &Resolved, out: &Path, preg: bool) -> std::result::Result<MetricsOutput, CliError> {
    if !preg {
        gc_build(cfg, out)?;
    }
    transfer(cfg, out, preg)?;
    optimize(cfg, out, preg)?;
    metrics(cfg, out, preg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub pair_id: String,
    pub status: String,
    pub pd: Option<f64>,
    pub pv: Option<f64>,
    pub cr: Option<f64>,
    pub dd: Option<f64>,
    pub flags: String,
}

impl BatchRow {
    fn ok(pair_id: String, m: &MetricsReport, flags: &[String]) -> Self {
        BatchRow {
            pair_id,
            status: "ok".into(),
            pd: Some(m.pd),
            pv: Some(m.pv),
            cr: Some(m.cr),
            dd: Some(m.dd),
            flags: flags.join(";"),
        }
    }

    fn failed(pair_id: String, error: &str) -> Self {
        BatchRow {
            pair_id,
            status: "failed".into(),
            pd: None,
            pv: None,
            cr: None,
            dd: None,
            flags: error.replace(['\n', '\r'], " "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub pairs: usize,
    pub succeeded: usize,
    pub pd: Option<f64>,
    pub pv: Option<f64>,
    pub cr: Option<f64>,
    pub dd: Option<f64>,
}

impl BatchMeans {
    pub fn of(rows: &[BatchRow]) -> Self {
        let ok: Vec<&BatchRow> = rows.iter().filter(|r| r.status == "ok").collect();
        let mean = |f: fn(&BatchRow) -> Option<f64>| {
            (!ok.is_empty()).then(|| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64)
        };
        BatchMeans {
            pairs: rows.len(),
            succeeded: ok.len(),
            pd: mean(|r| r.pd),
            pv: mean(|r| r.pv),
            cr: mean(|r| r.cr),
            dd: mean(|r| r.dd),
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> std::result::Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub struct BatchOutput {
    pub rows: Vec<BatchRow>,
    pub means: BatchMeans,
}

fn pair_config(entry: serde_json::Value, manifest_dir: &Path) -> Result<Resolved> {
    match entry {
        serde_json::Value::String(p) => {
            let path = manifest_dir.join(p);
            Resolved::load(&path)
        }
        v @ serde_json::Value::Object(_) => Resolved::new(PipelineConfig::from_value(v)?, manifest_dir.to_path_buf()),
        other => Err(Error::Invalid(format!("manifest entries must be config paths or objects, found {other}"))),
    }
}

/// The `id` of an inline config, or of the config file an entry points to.
/// Unreadable files get no id here; their error is reported when the pair runs.
fn entry_id(entry: &serde_json::Value, manifest_dir: &Path) -> Option<String> {
    let id = |v: &serde_json::Value| v.get("id").and_then(|v| v.as_str()).map(str::to_string);
    match entry {
        serde_json::Value::String(p) => {
            let text = std::fs::read_to_string(manifest_dir.join(p)).ok()?;
            id(&serde_json::from_str(&text).ok()?)
        }
        other => id(other),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => builder = builder.num_threads(n),
            _ => return Err(Error::Invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        }
    }
    builder.build().map_err(|e| Error::Invalid(format!("cannot start worker threads: {e}")))
}

/// Runs every pair of a manifest (a JSON array of configs or config paths)
/// into `out/<pair id>/`. Failed pairs are recorded and the batch goes on.
pub fn batch(manifest: &Path, out: &Path, preg: bool, seed: Option<u64>) -> std::result::Result<BatchOutput, CliError> {
    let entries: Vec<serde_json::Value> = read_json(manifest)?;
    if entries.is_empty() {
        return Err(Error::Invalid(format!("{}: manifest lists no pairs", manifest.display())).into());
    }
    let base = base_of(manifest);
    let ids: Vec<String> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| entry_id(e, &base).unwrap_or_else(|| format!("pair_{i:03}")))
        .collect();
    for (i, id) in ids.iter().enumerate() {
        if ids[..i].contains(id) || id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
            return Err(Error::Invalid(format!("pair id {id:?} is duplicated or not a plain name")).into());
        }
    }
    let pool = thread_pool()?;
    let rows: Vec<BatchRow> = pool.install(|| {
        entries
            .into_par_iter()
            .zip(ids.into_par_iter())
            .map(|(entry, id)| {
                let run = || -> std::result::Result<MetricsOutput, CliError> {
                    let mut cfg = pair_config(entry, &base)?;
                    if let Some(s) = seed {
                        cfg.set_seed(s);
                    }
                    run_all(&cfg, &out.join(&id), preg)
                };
                match run() {
                    Ok(m) => BatchRow::ok(id, &m.target, &m.flags),
                    Err(e) => {
                        log::warn!("pair {id} failed: {e}");
                        BatchRow::failed(id, &e.to_string())
                    }
                }
            })
            .collect()
    });
    let means = BatchMeans::of(&rows);
    write_rows(&out.join("batch.csv"), &rows)?;
    write_rows(&out.join("batch_means.csv"), std::slice::from_ref(&means))?;
    Ok(BatchOutput { rows, means })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, pd: f64, dd: f64) -> BatchRow {
        BatchRow {
            pair_id: id.into(),
            status: "ok".into(),
            pd: Some(pd),
            pv: Some(1.0),
            cr: Some(10.0),
            dd: Some(dd),
            flags: String::new(),
        }
    }

    #[test]
    fn means_skip_failed_rows() {
        let rows = vec![row("a", 0.1, 1.0), row("b", 0.3, 2.0), BatchRow::failed("c".into(), "bad\nthing")];
        let m = BatchMeans::of(&rows);
        assert_eq!((m.pairs, m.succeeded), (3, 2));
        assert!((m.pd.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(m.dd, Some(1.5));
        assert_eq!(rows[2].flags, "bad thing");
        assert_eq!(BatchMeans::of(&rows[2..]).pd, None);
    }

    #[test]
    fn baseline_files_go_to_their_own_directory() {
        assert_eq!(method_dir(Path::new("out"), true), PathBuf::from("out/preg"));
        assert_eq!(method_dir(Path::new("out"), false), PathBuf::from("out"));
    }
}
