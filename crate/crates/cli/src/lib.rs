//! `radarseg`: generate synthetic radar scenes, train and evaluate X-Conv
//! segmentation networks, render predictions, check gradients and run
//! feature ablations.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
//! failure (including a failed gradient check).

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use radar_xconv::diff::OpKind;

use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "radarseg", version, about = "Semantic segmentation of radar point clouds with X-Convolutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Write a synthetic labeled dataset plus class statistics.
    Generate {
        #[arg(long)]
        scenes: usize,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a network and keep the checkpoint of its best epoch.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Predict one scene; writes an SVG and a per-point CSV.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        /// A scene_*.csv file (its .toml sidecar must sit beside it).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        /// Defaults to the SVG path with a .csv extension.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference gradient check of every layer type.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corrupts the backward pass of one tape op (test hook).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Retrain without v_r and/or sigma and compare.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Evaluation scenes; the training data when omitted.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the fully resolved configuration (defaults when no file is given).
    ShowConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: &Option<PathBuf>, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load_or_default(path.as_deref())?;
    if let Some(s) = seed {
        if s > i64::MAX as u64 {
            return Err(CliError::usage("--seed must not exceed 2^63 - 1"));
        }
        cfg.seed = s;
    }
    Ok(cfg)
}

fn pick(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| from_config.clone())
        .ok_or_else(|| CliError::usage(format!("--{name} is required (or set paths.{name} in the config)")))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { scenes, seed, out, config } => {
            let cfg = load(&config, seed)?;
            let out = pick(out, &cfg.paths.out, "out")?;
            commands::generate(&cfg, scenes, &out)
        }
        Command::Train { data, out, config, seed } => {
            let cfg = load(&config, seed)?;
            let data = pick(data, &cfg.paths.data, "data")?;
            let out = pick(out, &cfg.paths.out, "out")?;
            commands::train(&cfg, &data, &out)
        }
        Command::Eval { ckpt, data, report, config } => {
            let cfg = load(&config, None)?;
            let data = pick(data, &cfg.paths.data, "data")?;
            commands::eval(&cfg, &ckpt, &data, &report)
        }
        Command::Predict { ckpt, scene, svg, csv, config } => {
            let cfg = load(&config, None)?;
            commands::predict(&cfg, &ckpt, &scene, &svg, csv.as_deref())
        }
        Command::Gradcheck { config, inject_fault } => {
            let cfg = load(&config, None)?;
            let fault = match inject_fault.as_deref() {
                None => None,
                Some(name) => Some(OpKind::parse(name).ok_or_else(|| CliError::usage(format!("unknown op kind `{name}`")))?),
            };
            commands::gradcheck(&cfg, fault)
        }
        Command::Ablate { data, eval_data, out, config, seed } => {
            let cfg = load(&config, seed)?;
            let data = pick(data, &cfg.paths.data, "data")?;
            let out = pick(out, &cfg.paths.out, "out")?;
            commands::ablate(&cfg, &data, eval_data.as_deref().map(Path::new), &out)
        }
        Command::ShowConfig { config } => commands::show_config(&load(&config, None)?),
    }
}

/// Parses `args` (program name first) and runs the command. Help and
/// version requests count as success.
pub fn run_args<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            Ok(())
        }
        Err(e) => Err(CliError::usage(e.to_string())),
    }
}
