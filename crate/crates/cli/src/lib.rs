//! Command-line pipeline: cylinder modeling, contact transfer, pose
//! optimization, metrics and batch runs over file-based inputs.

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::Resolved;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gcgrasp_core::Error),
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// 2 for bad input or configuration, 1 when a method fails on valid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_input_error() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gcgrasp", version, about = "Grasp transfer between object parts via generalized cylinders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the source and target cylinders.
    GcBuild(StageArgs),
    /// Extract the source contact map and transfer it to the target part.
    Transfer(StageArgs),
    /// Optimize the hand pose against the transferred contacts.
    Optimize(StageArgs),
    /// Compute PD, PV, CR and DD for the optimized and source grasps.
    Metrics(StageArgs),
    /// Run every stage for each pair of a manifest.
    Batch(StageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Rigid part registration instead of cylinder transfer.
    Preg,
}

#[derive(Debug, Clone, clap::Args)]
pub struct StageArgs {
    /// Pipeline config JSON (a manifest for `batch`).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl StageArgs {
    fn preg(&self) -> bool {
        self.baseline == Some(Baseline::Preg)
    }

    fn resolve(&self) -> Result<(Resolved, PathBuf), CliError> {
        let mut cfg = Resolved::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir());
        Ok((cfg, out))
    }
}

/// Runs one command and returns the lines to print.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let mut lines = Vec::new();
    match &cli.command {
        Command::GcBuild(a) => {
            let (cfg, out) = a.resolve()?;
            let built = commands::gc_build(&cfg, &out)?;
            for (name, gc) in [("source", &built.source), ("target", &built.target)] {
                lines.push(format!(
                    "{name} cylinder: {} sections, H = {:.4}, written to {}",
                    gc.sections().len(),
                    gc.height(),
                    out.join(format!("{name}_gc.json")).display()
                ));
            }
        }
        Command::Transfer(a) => {
            let (cfg, out) = a.resolve()?;
            let r = commands::transfer(&cfg, &out, a.preg())?;
            lines.push(format!(
                "{} contacts transferred ({:?}), delta_H = {:.4}, {} clamped, {} fallback",
                r.target_map.points.len(),
                r.method,
                r.delta_h,
                r.clamped_count(),
                r.fallback_count()
            ));
        }
        Command::Optimize(a) => {
            let (cfg, out) = a.resolve()?;
            let r = commands::optimize(&cfg, &out, a.preg())?;
            lines.push(format!(
                "{} iterations: total {:.6} -> {:.6} (best at {}, converged: {})",
                r.iterations,
                r.first().total,
                r.best().total,
                r.best_iteration,
                r.converged
            ));
        }
        Command::Metrics(a) => {
            let (cfg, out) = a.resolve()?;
            let m = commands::metrics(&cfg, &out, a.preg())?;
            for (name, r) in [("target", &m.target), ("source", &m.source)] {
                lines.push(format!("{name}: PD {:.4} cm, PV {:.4} cm3, CR {:.2} %, DD {:.4} cm", r.pd, r.pv, r.cr, r.dd));
            }
        }
        Command::Batch(a) => {
            let out = a.out.clone().unwrap_or_else(|| config::base_of(&a.config).join("out"));
            let b = commands::batch(&a.config, &out, a.preg(), a.seed)?;
            lines.push(format!(
                "{} of {} pairs succeeded; results in {}",
                b.means.succeeded,
                b.means.pairs,
                out.join("batch.csv").display()
            ));
        }
    }
    Ok(lines)
}
