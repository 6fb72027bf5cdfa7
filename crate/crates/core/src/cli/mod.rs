//! The `sketchguard` command line.
//!
//! Exit codes: 0 on success, 1 on a domain failure (unrecoverable nodes,
//! failed verification), 2 on usage or IO errors.
//!
//! `simulate` reads one JSON config; flags given on the command line replace
//! the matching config fields, and the trace header's identifier width
//! replaces `batch.bits_mid`. `--seed` falls back to `SKETCHGUARD_SEED`.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::batching::{Policy, RepKind};
use crate::redundancy::{MappingKind, PartitionKind};

pub use manifest::{sidecar, RunManifest, GIT_DESCRIBE};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Domain(_) => 1,
            Self::Usage(_) | Self::Io(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sketchguard", version, about = "Recoverable Count-Min Sketch experiments")]
pub struct Cli {
    /// Worker threads for parameter sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Zipf-distributed trace.
    GenTrace(GenTraceArgs),
    /// Print the redundant matrix and optionally check its spans.
    Matrix(MatrixArgs),
    /// Run the network simulation over a trace.
    Simulate(SimulateArgs),
    /// Print recovery equations for a set of failed nodes.
    RecoverDemo(RecoverDemoArgs),
    /// Per-batch frequency-per-flow and representation advice.
    Beta(BetaArgs),
    /// Estimation error of a backup after a mid-batch failure.
    Mre(MreArgs),
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub flows: u64,
    #[arg(long)]
    pub items: usize,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.0)]
    pub zipf: f64,
    #[arg(long, env = "SKETCHGUARD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub bits_mid: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub f: usize,
    /// Print the top `f` rows of the Pascal matrix instead.
    #[arg(long)]
    pub pascal: bool,
    /// Print all `f x f` column-subset determinants and the span check.
    #[arg(long)]
    pub check: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    /// JSON failure script: `{"failures": [...]}` or a bare array.
    #[arg(long)]
    pub failures: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Exit 0 even when some node could not be recovered.
    #[arg(long)]
    pub allow_loss: bool,
    #[arg(long, env = "SKETCHGUARD_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub capacity: Option<usize>,
    #[arg(long)]
    pub representation: Option<RepKind>,
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<Policy>,
    /// Run once per listed representation, each under `<out>/<name>`.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<RepKind>,
}

#[derive(Debug, Args)]
pub struct RecoverDemoArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub f: usize,
    #[arg(long, default_value = "dedicated")]
    pub mapping: MappingKind,
    #[arg(long, default_value = "single")]
    pub partition: PartitionKind,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Failed nodes: `D<j>` data, `R<i>` dedicated redundant (1-based), or a 0-based node id.
    #[arg(long, value_delimiter = ',', required = true)]
    pub failed: Vec<String>,
    /// Check the equations on random data sketches of this many items each.
    #[arg(long, default_value_t = 0)]
    pub verify_items: usize,
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 64)]
    pub w: usize,
    #[arg(long, env = "SKETCHGUARD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long = "B", value_delimiter = ',', required = true)]
    pub capacities: Vec<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    /// Identifier width for theta; defaults to the trace header.
    #[arg(long)]
    pub bits_mid: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MreArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long = "B", value_delimiter = ',', required = true)]
    pub capacities: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub fail_at: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub point: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub delta: f64,
    #[arg(long, env = "SKETCHGUARD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown policy {s:?}"))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli, &raw) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
