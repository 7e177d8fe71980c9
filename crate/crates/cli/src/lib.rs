//! Command-line harness for the hdc-hwcal experiments.
//!
//! Each run subcommand takes an optional `--config` file and any number of
//! `--section.key value` overrides; see [`config::KEYS`].

pub mod compare;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Experiment, ExperimentConfig, Settings};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "hdc-hwcal", version, about = "Hardware-aware hyperdimensional computing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel approximation: RBF target vs naive, calibrated and jointly optimized hardware kernels.
    Kernel(RunArgs),
    /// Quantized prototype classification under hardware distortion.
    Classify(RunArgs),
    /// Whole-graph memory and edge reconstruction.
    GraphRecon(RunArgs),
    /// Relation hypervector node classification.
    NodeClassify(RunArgs),
    /// Metric deltas between two reports of the same experiment.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
#[command(after_help = "Overrides: --<key> <value>, --<key>=<value>, or --<key> alone for true.\nKeys: see `config::KEYS` (e.g. --hw.family tanh --hw.gain 2 --optimized).")]
pub struct RunArgs {
    /// `key = value` config file; overrides on the command line win.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference report.
    pub a: PathBuf,
    /// Candidate report.
    pub b: PathBuf,
    /// Allowed worsening before a metric is flagged.
    #[arg(long, default_value_t = 0.01)]
    pub tolerance: f64,
    /// Where to write the comparison.
    #[arg(long, default_value = "compare.json")]
    pub out: PathBuf,
}

/// Preset, then config file, then overrides.
pub fn resolve(experiment: Experiment, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut s = match &args.config {
        Some(path) => Settings::read(path)?,
        None => Settings::default(),
    };
    s.merge(&Settings::from_args(&args.overrides)?);
    ExperimentConfig::resolve(experiment, &s)
}

/// Run a parsed command, returning the lines to print.
pub fn execute(cli: Cli) -> Result<Vec<String>> {
    let (experiment, args) = match cli.command {
        Command::Kernel(a) => (Experiment::Kernel, a),
        Command::Classify(a) => (Experiment::Classify, a),
        Command::GraphRecon(a) => (Experiment::GraphRecon, a),
        Command::NodeClassify(a) => (Experiment::NodeClassify, a),
        Command::Compare(a) => return compare_files(&a),
    };
    let c = resolve(experiment, &args)?;
    let summary = run::run(&c)?;
    Ok(vec![format!("{experiment}: {}", summary.headline), format!("wrote {}", summary.out_dir.display())])
}

fn compare_files(a: &CompareArgs) -> Result<Vec<String>> {
    if a.tolerance.is_nan() || a.tolerance < 0.0 {
        return Err(CliError::config("`--tolerance` must be >= 0"));
    }
    let (ra, rb) = (compare::read_report(&a.a)?, compare::read_report(&a.b)?);
    let names = (a.a.display().to_string(), a.b.display().to_string());
    let c = compare::compare(&ra, &rb, (&names.0, &names.1), a.tolerance)?;
    std::fs::write(&a.out, report::to_json(&c)).map_err(|source| CliError::Output { path: a.out.clone(), source })?;
    let mut lines = c.lines();
    lines.push(format!("{} regression(s) at tolerance {}", c.regressions, c.tolerance));
    Ok(lines)
}
