//! Command-line front end for the gate-noise bath simulator.
//!
//! Every subcommand reads one JSON [`RunConfig`], applies flag overrides,
//! writes its outputs into a directory and finishes with a `manifest.json`
//! holding the resolved configuration and output checksums.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gatebath::noisegen::SequenceKind;

pub use commands::{execute, rerun, Outcome};
pub use config::{EngineKind, Overrides, RunConfig};
pub use manifest::{RunManifest, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;
pub const EXIT_THRESHOLD: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("engine error: {0}")]
    Engine(String),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => EXIT_CONFIG,
            Self::Engine(_) => EXIT_ENGINE,
        }
    }

    pub(crate) fn engine(context: impl std::fmt::Display, e: gatebath::Error) -> Self {
        Self::Engine(format!("{context}: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gatebath",
    version,
    about = "Open-system exciton dynamics from noisy gate circuits, checked against HEOM"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Noiseless Rabi oscillation from the circuit engine or the exact oracle.
    Coherent,
    /// Dissipative circuit traces, one CSV per damping coefficient.
    Dissipative,
    /// HEOM reference trace plus a hierarchy convergence report.
    Heom,
    /// Sweep damping coefficients, fit λ to each trace and fit a line λ(d).
    Calibrate,
    /// Invert a calibration line at λ and compare the circuit with HEOM.
    Predict,
    /// Tune the two-qubit error strength so fitted λ matches the anchors.
    CalibrateNoise,
    /// Repeat a recorded run and check its CSVs are bit-identical.
    Rerun {
        /// Manifest of the run to repeat.
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Coherent => "coherent",
            Self::Dissipative => "dissipative",
            Self::Heom => "heom",
            Self::Calibrate => "calibrate",
            Self::Predict => "predict",
            Self::CalibrateNoise => "calibrate-noise",
            Self::Rerun { .. } => "rerun",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "coherent" => Self::Coherent,
            "dissipative" => Self::Dissipative,
            "heom" => Self::Heom,
            "calibrate" => Self::Calibrate,
            "predict" => Self::Predict,
            "calibrate-noise" => Self::CalibrateNoise,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// RNG seed for shot sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [env: GATEBATH_OUT, default ./gatebath-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Single damping coefficient d.
    #[arg(long, global = true, conflicts_with = "ds")]
    pub d: Option<f64>,
    /// Comma-separated list of damping coefficients.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub ds: Option<Vec<f64>>,
    /// Reorganization energy λ in cm⁻¹ (HEOM bath and prediction target).
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Identity-contracting gate word: X2, XZ2, XZXZZ2 or SWAP2.
    #[arg(long, global = true)]
    pub sequence: Option<SequenceKind>,
    /// Engine: circuit, heom or oracle.
    #[arg(long, global = true)]
    pub engine: Option<EngineKind>,
    /// Measurement shots per time step.
    #[arg(long, global = true, conflicts_with = "exact")]
    pub shots: Option<u64>,
    /// Use exact populations instead of sampled shots.
    #[arg(long, global = true)]
    pub exact: bool,
    /// Number of propagation steps after t = 0.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Calibration JSON used by `predict`.
    #[arg(long, global = true, value_name = "FILE")]
    pub calibration: Option<PathBuf>,
    /// Skip the (L+2, K+1) convergence run after `heom`.
    #[arg(long, global = true)]
    pub skip_convergence: bool,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            d: self.d,
            ds: self.ds.clone(),
            lambda: self.lambda,
            sequence: self.sequence,
            engine: self.engine,
            shots: self.shots,
            exact: self.exact,
            n_steps: self.steps,
            calibration: self.calibration.clone(),
        }
    }

    /// JSON file (if any) merged with the flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        if self.skip_convergence {
            cfg.skip_convergence = true;
        }
        Ok(cfg)
    }
}

/// Runs a parsed command line and returns the process exit code. Errors are
/// reported on stderr.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Rerun { manifest } => rerun(manifest, cli.common.out.as_deref()),
        cmd => cli
            .common
            .resolve()
            .and_then(|cfg| execute(cmd, cfg, cli.common.engine)),
    };
    match result {
        Ok(outcome) => outcome.exit_code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
