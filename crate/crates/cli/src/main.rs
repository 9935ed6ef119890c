//! `plexseg`: the segmentation pipeline from the command line.
//!
//! Exit status: 0 on success, 2 on a usage or configuration error, 1 when
//! the run itself fails.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plexseg::data_model::{Device, ExperimentArm};
use toml::Value;

use crate::commands::Ctx;
use crate::config::ConfigBuilder;
use crate::manifest::{write_manifest, Artifacts};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<plexseg::Error> for CliError {
    fn from(e: plexseg::Error) -> Self {
        match e {
            plexseg::Error::InvalidConfig(m) => CliError::Usage(format!("invalid configuration: {m}")),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "plexseg", version, about = "Brachial plexus ultrasound segmentation pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Every flag has a `PLEXSEG_` environment twin; flags win over the
/// environment, both win over the config file.
#[derive(Args)]
struct GlobalArgs {
    /// TOML config file layered over the built-in defaults.
    #[arg(long, global = true, env = "PLEXSEG_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "PLEXSEG_DATASET_ROOT")]
    dataset_root: Option<PathBuf>,
    #[arg(long, global = true, env = "PLEXSEG_OUT")]
    out: Option<PathBuf>,
    /// Arms to run, comma separated; single-arm commands use the first.
    #[arg(long, global = true, env = "PLEXSEG_ARM", value_delimiter = ',')]
    arm: Vec<ExperimentArm>,
    #[arg(long, global = true, env = "PLEXSEG_K")]
    k: Option<usize>,
    /// Sets the fold, network, training and synthetic seeds together.
    #[arg(long, global = true, env = "PLEXSEG_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "PLEXSEG_WORKERS")]
    workers: Option<usize>,
    /// Restrict the dataset to one device (YGY, BK3000_IF1, BK3000_IF2, SYNTHETIC).
    #[arg(long, global = true, env = "PLEXSEG_DEVICE_PROFILE")]
    device_profile: Option<Device>,
    /// Fold plan JSON to reuse instead of drawing one from k and seed.
    #[arg(long, global = true, env = "PLEXSEG_FOLDS")]
    folds: Option<PathBuf>,
    /// Override any config key, e.g. `--set training.epochs=5`.
    #[arg(long = "set", global = true, env = "PLEXSEG_SET", value_name = "KEY=VALUE", value_delimiter = ';')]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom dataset with simulated raters into --out.
    SynthGen,
    /// Validate the dataset and write network-ready inputs for the first arm.
    Prepare,
    /// Intensity histograms per device before and after CLAHE.
    EnhanceReport,
    /// Train and evaluate one fold of the first arm.
    Train {
        /// 1-based fold index.
        #[arg(long, default_value_t = 1)]
        fold: usize,
    },
    /// k-fold cross-validation of every configured arm.
    Crossval,
    /// Per-fold agreement of each rater with the consensus.
    CompareRaters {
        /// Arm CSV from `crossval` to add as the system row.
        #[arg(long)]
        system: Option<PathBuf>,
    },
    /// First- versus second-pass agreement of raters on one fold.
    AssistReport {
        /// Rater ids (default: the configured raters).
        #[arg(long, value_delimiter = ',')]
        rater: Vec<String>,
        /// 1-based fold index.
        #[arg(long, default_value_t = 1)]
        fold: usize,
    },
    /// Prediction overlays from a checkpoint.
    Overlay {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Render at most this many samples.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Draw the fold plan and write folds.json.
    Folds,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthGen => "synth-gen",
            Command::Prepare => "prepare",
            Command::EnhanceReport => "enhance-report",
            Command::Train { .. } => "train",
            Command::Crossval => "crossval",
            Command::CompareRaters { .. } => "compare-raters",
            Command::AssistReport { .. } => "assist-report",
            Command::Overlay { .. } => "overlay",
            Command::Folds => "folds",
        }
    }
}

fn path_value(p: &std::path::Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn build_config(g: &GlobalArgs) -> Result<config::RunConfig, CliError> {
    let mut b = ConfigBuilder::new();
    if let Some(p) = &g.config {
        b = b.file(p)?;
    }
    if let Some(p) = &g.dataset_root {
        b = b.set_value("dataset_root", path_value(p))?;
    }
    if let Some(p) = &g.out {
        b = b.set_value("out", path_value(p))?;
    }
    if !g.arm.is_empty() {
        let arms = g.arm.iter().map(|a| Value::String(a.as_str().into())).collect();
        b = b.set_value("arms", Value::Array(arms))?;
    }
    if let Some(k) = g.k {
        b = b.set_value("k", Value::Integer(k as i64))?;
    }
    if let Some(seed) = g.seed {
        let v = i64::try_from(seed).map_err(|_| CliError::Usage(format!("seed {seed} is too large")))?;
        for key in ["seed", "network.seed", "training.seed", "synthetic.seed"] {
            b = b.set_value(key, Value::Integer(v))?;
        }
    }
    if let Some(w) = g.workers {
        b = b.set_value("workers", Value::Integer(w as i64))?;
    }
    if let Some(d) = g.device_profile {
        b = b.set_value("device_profile", Value::String(d.as_str().into()))?;
    }
    for s in &g.set {
        b = b.set(s)?;
    }
    b.build()
}

fn run(cli: Cli, arguments: Vec<String>) -> Result<(), CliError> {
    let cfg = build_config(&cli.global)?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut ctx = Ctx { cfg: &cfg, folds: cli.global.folds.as_deref(), artifacts: Artifacts::new(&cfg.out) };
    match &cli.command {
        Command::SynthGen => commands::synth_gen(&mut ctx)?,
        Command::Prepare => commands::prepare(&mut ctx)?,
        Command::EnhanceReport => commands::enhance_report(&mut ctx)?,
        Command::Train { fold } => commands::train(&mut ctx, *fold)?,
        Command::Crossval => commands::crossval(&mut ctx)?,
        Command::CompareRaters { system } => commands::compare(&mut ctx, system.as_deref())?,
        Command::AssistReport { rater, fold } => commands::assist(&mut ctx, rater, *fold)?,
        Command::Overlay { checkpoint, limit } => commands::overlay(&mut ctx, checkpoint, *limit)?,
        Command::Folds => commands::folds(&mut ctx)?,
    }
    write_manifest(cli.command.name(), arguments, &cfg, &ctx.artifacts)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let arguments = std::env::args().skip(1).collect();
    match run(cli, arguments) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plexseg: error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Runtime(_) => 1,
            })
        }
    }
}
