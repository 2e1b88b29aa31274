//! `handfield`: generate pose datasets, optimize sensor placement, simulate
//! sensor streams, fuse them and evaluate the result.

mod commands;
mod config;

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use handfield::Error;

use crate::config::LayoutChoice;

#[derive(Parser)]
#[command(name = "handfield", version, about = "Multi-sensor hand tracking pipeline")]
struct Cli {
    /// Pipeline config JSON; a bare swarm config is also accepted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reference trajectories and their Monte Carlo expansion.
    Generate(GenerateArgs),
    /// Optimize the sensor layout, or score a given one.
    Optimize(OptimizeArgs),
    /// Per-sensor streams and visibility annotations.
    Simulate(SimulateArgs),
    /// Resample, realign and fuse sensor streams.
    Fuse(FuseArgs),
    /// Per-frame, per-sensor, per-finger visibility report.
    Raytrace(RaytraceArgs),
    /// Compare a fused stream with ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Monte Carlo samples per reference frame.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Score this layout instead of optimizing.
    #[arg(long)]
    layout: Option<LayoutChoice>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convergence trace CSV; defaults to the layout path with `.trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    layout: Option<LayoutChoice>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave this sensor out; repeatable.
    #[arg(long = "disable")]
    disabled: Vec<u32>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long, num_args = 1.., required = true)]
    streams: Vec<PathBuf>,
    #[arg(long)]
    layout: Option<LayoutChoice>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FovChoice {
    Optimization,
    Sensing,
}

#[derive(Args)]
struct RaytraceArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    layout: Option<LayoutChoice>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "optimization")]
    fov: FovChoice,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    fused: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Visibility annotations written by `simulate`.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Report key for the configuration; defaults to the config hash prefix.
    #[arg(long)]
    configuration: Option<String>,
    /// Report key for the motion; defaults to the truth file stem.
    #[arg(long)]
    motion: Option<String>,
}

/// A message and the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// Config and domain errors are the caller's to fix; the rest are data errors.
    pub fn config(err: Error) -> Self {
        match err {
            Error::Config(_) | Error::Domain(_) => Self::usage(err.to_string()),
            _ => Self::data(err.to_string()),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        Self::config(err)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = config::PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => commands::generate(config, a),
        Command::Optimize(a) => commands::optimize(config, a),
        Command::Simulate(a) => commands::simulate(config, a),
        Command::Fuse(a) => commands::fuse(config, a),
        Command::Raytrace(a) => commands::raytrace(config, a),
        Command::Evaluate(a) => commands::evaluate(config, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("handfield: {e}");
            ExitCode::from(e.code)
        }
    }
}
