//! Command-line front end. Every subcommand reads a JSON [`RunConfig`],
//! writes its artifacts into the output directory and returns a short
//! summary for stdout.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::RunConfig;

use crate::kernel::KernelError;
use crate::oscillation::{OscillationError, Window};
use crate::solver::SolveError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("singular kernel on interval {k}: {message}")]
    Singular { k: i64, message: String },
    #[error("no crossing of {quantity} = {threshold} in [{lo}, {hi}]")]
    NoCrossing { quantity: String, threshold: f64, lo: f64, hi: f64 },
    #[error("oracle deviation {deviation:e} exceeds tolerance {tolerance:e}")]
    OracleTolerance { deviation: f64, tolerance: f64 },
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Singular { .. } => 3,
            CliError::NoCrossing { .. } => 4,
            CliError::OracleTolerance { .. } => 5,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e.singular_interval() {
            Some(k) => CliError::Singular { k, message: e.to_string() },
            None => match e {
                SolveError::MissingHistory { .. }
                | SolveError::LaggedStart { .. }
                | SolveError::Kernel(KernelError::LaggedGrid) => CliError::Config(e.to_string()),
                other => CliError::Other(other.to_string()),
            },
        }
    }
}

impl From<OscillationError> for CliError {
    fn from(e: OscillationError) -> Self {
        match e {
            OscillationError::Solve(s) => s.into(),
            OscillationError::Kernel(k) => SolveError::from(k).into(),
            OscillationError::WindowTooShort { .. }
            | OscillationError::WindowOutOfRange { .. }
            | OscillationError::NotApplicable(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "idepcag", version, about = "Solve and analyze linear impulsive equations with piecewise constant arguments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve and write trajectory.csv.
    Solve(CommonArgs),
    /// Classify the solved trajectory and write classification.txt.
    Classify(CommonArgs),
    /// Evaluate the oscillation and nonoscillation criteria, write criterion.txt.
    Criterion(CommonArgs),
    /// Sweep a parameter, write sweep.csv and optionally locate a threshold crossing.
    Sweep(CommonArgs),
    /// Compare the kernel solution with the RK4 reference, write oracle_check.txt.
    OracleCheck(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding output.dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Analysis window as BURN_IN,WIDTH.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<Window>,
    /// Strictness tolerance, or the deviation tolerance for oracle-check.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Draw oracle-check sample points at random with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_window(text: &str) -> Result<Window, String> {
    let (k0, w) = text.split_once(',').ok_or_else(|| format!("expected BURN_IN,WIDTH, got `{text}`"))?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
    Ok(Window::new(parse(k0)?, parse(w)?))
}

/// Loads the config named by `args` and applies the command-line overrides.
pub fn load(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(w) = args.window {
        cfg.analysis.window = [w.burn_in, w.width];
    }
    Ok(cfg)
}

/// Runs one subcommand and returns the stdout summary.
pub fn run(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Solve(args) => commands::solve(&load(args)?),
        Command::Classify(args) => commands::classify(&with_tol(load(args)?, args.tol)),
        Command::Criterion(args) => commands::criterion(&with_tol(load(args)?, args.tol)),
        Command::Sweep(args) => commands::sweep(&with_tol(load(args)?, args.tol)),
        Command::OracleCheck(args) => {
            let mut cfg = load(args)?;
            if let Some(tol) = args.tol {
                cfg.oracle.tolerance = tol;
            }
            commands::oracle_check(&cfg, args.seed)
        }
    }
}

fn with_tol(mut cfg: RunConfig, tol: Option<f64>) -> RunConfig {
    if let Some(tol) = tol {
        cfg.analysis.strictness_tol = tol;
    }
    cfg
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
