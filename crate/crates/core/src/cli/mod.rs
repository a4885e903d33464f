//! `immuno` command-line front end.
//!
//! Every subcommand writes a `config.toml` snapshot next to its outputs. The
//! snapshot has one section named after the subcommand, and its keys are the
//! long flag names, so `immuno run <snapshot>` replays the run exactly.
//! Trailing flags after the snapshot path override keys from the file.
//!
//! Exit codes: 0 on success, 2 for usage and validation errors, 3 when a
//! computation fails numerically.

mod commands;
mod snapshot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::Error;

pub use snapshot::{args_from_snapshot, SNAPSHOT_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "immuno", version, about = "Epitope prediction, vaccine assembly and immune-dynamics toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic labeled epitope corpus.
    Gen(GenArgs),
    /// Train one of the four models on a record file.
    Train(TrainArgs),
    /// Evaluate a classifier checkpoint, or derive metrics from raw counts.
    Eval(EvalArgs),
    /// Score and rank an epitope pool.
    Rank(RankArgs),
    /// Select a vaccine candidate under HLA-supertype coverage.
    Assemble(AssembleArgs),
    /// Integrate the proliferation or CD8 model.
    Simulate(SimulateArgs),
    /// Final T-cell count across an antigen grid.
    Sweep(SweepArgs),
    /// Replay a config snapshot.
    #[serde(skip)]
    Run(RunArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output record file; `.jsonl` selects JSON lines, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = crate::seqdata::DEFAULT_MOTIF)]
    pub motif: String,
    #[arg(long, default_value_t = 0.9)]
    pub signal: f64,
    #[arg(long, default_value_t = crate::seqdata::DEFAULT_PEPTIDE_LEN)]
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Model1,
    Cnn,
    Autoencoder,
    Gan,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Epochs without improvement before stopping, or `none`.
    #[arg(long, default_value = "10")]
    pub patience: String,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Affinity loss weight (reconstruction weight for the autoencoder).
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Immunogenicity loss weight.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Conservation loss weight.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 16)]
    pub latent_dim: usize,
    /// Candidates generated after GAN training.
    #[arg(long, default_value_t = 4)]
    pub candidates: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint directory written by `train`.
    #[arg(long, required_unless_present = "from_counts", conflicts_with = "from_counts")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Labeled records to evaluate; every record is scored.
    #[arg(long, required_unless_present = "from_counts", conflicts_with = "from_counts")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Raw confusion counts, e.g. `tp=2434,tn=2448,fp=53,fn=65`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from_counts: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 20)]
    pub pr_points: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct WeightArgs {
    #[arg(long, default_value_t = 1.0)]
    pub w_imm: f64,
    #[arg(long, default_value_t = 0.25)]
    pub w_cons: f64,
    #[arg(long, default_value_t = 0.25)]
    pub w_rec: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RankArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model checkpoint supplying missing scores and reconstruction errors.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: WeightArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AssembleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Supertypes the candidate must cover.
    #[arg(long, value_delimiter = ',', default_value = "A2,A3,B7")]
    pub require: Vec<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: WeightArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsModel {
    Prolif,
    Cd8,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProliferationArgs {
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Initial T-cell count (proliferation model).
    #[arg(long, default_value_t = 100.0)]
    pub cells: f64,
    /// Exhaustion half-decline antigen level; enables the high-dose decline.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_ex: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub n_ex: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: DynamicsModel,
    #[arg(long)]
    pub out: PathBuf,
    /// Run length; 7 days for prolif, 30 for cd8 when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub days: Option<f64>,
    #[arg(long, default_value_t = crate::dynamics::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub prolif: ProliferationArgs,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    /// Constant antigen level (proliferation model).
    #[arg(long, default_value_t = 1e6)]
    pub antigen: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta_t: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta_tv: f64,
    #[arg(long, default_value_t = 10.0)]
    pub p: f64,
    #[arg(long, default_value_t = 2.0)]
    pub k_ie: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho_i: f64,
    #[arg(long, default_value_t = 3.0)]
    pub c_v: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub i0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub e0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub detection_limit: f64,
    /// Print the step-halving self-convergence ratio (CD8 model).
    #[arg(long)]
    pub check_convergence: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Half-saturation constant; repeat for one curve per value.
    #[arg(long = "h", required = true)]
    pub h: Vec<f64>,
    #[arg(long, default_value_t = 7.0)]
    pub days: f64,
    #[arg(long, default_value_t = crate::dynamics::DEFAULT_STEP)]
    pub step: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub prolif: ProliferationArgs,
    #[arg(long, default_value_t = 1e-4)]
    pub antigen_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub antigen_max: f64,
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub snapshot: PathBuf,
    /// Flags overriding snapshot keys, e.g. `--out other --epochs 5`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Rank(_) => "rank",
            Command::Assemble(_) => "assemble",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Run(_) => "run",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_USAGE
    }
}

pub fn execute(cmd: Command) -> crate::Result<()> {
    match cmd {
        Command::Run(r) => {
            let args = args_from_snapshot(&r.snapshot, &r.overrides)?;
            let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
            if let Command::Run(_) = cli.command {
                return Err(Error::invalid("a snapshot cannot contain another run"));
            }
            execute(cli.command)
        }
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Rank(a) => commands::rank(&a),
        Command::Assemble(a) => commands::assemble(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    }
}
