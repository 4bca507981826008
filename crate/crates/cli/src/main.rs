//! `twoway`: command-line experiments.
//!
//! Exit status 0 on success, 1 when a converse check is violated, a target
//! is infeasible or an acceptance criterion fails, 2 on configuration and
//! usage errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "TWOWAY_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

/// Sorts core errors into bad input and genuine failures.
impl From<twoway::Error> for CliError {
    fn from(e: twoway::Error) -> Self {
        use twoway::Error as E;
        match e {
            E::InfeasibleDistortion { .. }
            | E::InfeasibleDistortionPair { .. }
            | E::NotConverged { .. }
            | E::Consistency(_) => CliError::Failed(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "twoway", version, about = "Two-way lossy communication experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Numerical tolerance; overrides `tol` in the config.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Verb {
    /// Capacity of `[channel]`.
    Capacity,
    /// Rate-distortion function at `[rd] targets`.
    Rd,
    /// Converse checks on a code file or on seeded random staggered codes.
    ConverseSweep,
    /// One optimized rate pair at `[kaspi] d1, d2`.
    KaspiPoint,
    /// Optimized rate pairs at every `[kaspi] targets` pair.
    KaspiSweep,
    /// Separation pipeline from an optimized witness.
    Separation,
    /// Lift, pad and stagger a general code.
    TransformDemo,
    /// Every acceptance criterion, twice for determinism.
    Reproduce,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Capacity => "capacity",
            Verb::Rd => "rd",
            Verb::ConverseSweep => "converse-sweep",
            Verb::KaspiPoint => "kaspi-point",
            Verb::KaspiSweep => "kaspi-sweep",
            Verb::Separation => "separation",
            Verb::TransformDemo => "transform-demo",
            Verb::Reproduce => "reproduce",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(done) => {
            print!("{}", done.summary);
            match done.failure {
                None => ExitCode::SUCCESS,
                Some(f) => {
                    eprintln!("twoway {}: {f}", cli.verb.name());
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("twoway {}: {e}", cli.verb.name());
            ExitCode::from(e.code())
        }
    }
}
