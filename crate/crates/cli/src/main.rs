//! `ss3`: generate synthetic low-rank data, fit estimators, run subspace
//! stability selection, score estimates against a known truth, evaluate
//! false-discovery bounds and run the preset simulation studies.

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ss3::estimators::EstimatorKind;
use ss3::experiment::Preset;
use ss3::stability::SelectionMode;

/// Exit status for bad flags, configs or input files.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status when the numerics fail.
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ss3", version, about = "Tangent-space false discovery control for low-rank estimation")]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a low-rank truth and one dataset around it.
    Generate(GenerateArgs),
    /// Fit the base estimator once and write the estimate.
    Estimate(EstimateArgs),
    /// Run subsampling and select the stable tangent (or column) space.
    Stabilize(StabilizeArgs),
    /// FD, PW and FDR of an estimate against the truth.
    Metrics(MetricsArgs),
    /// Computable false-discovery bounds for a stabilized selection.
    Bounds(BoundsArgs),
    /// Run a preset simulation study.
    Experiment(ExperimentArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Completion,
    Denoise,
    Linear,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Svt,
    Als,
    Spectral,
    Pca,
}

impl From<Estimator> for EstimatorKind {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Svt => EstimatorKind::Svt,
            Estimator::Als => EstimatorKind::Als,
            Estimator::Spectral => EstimatorKind::Spectral,
            Estimator::Pca => EstimatorKind::PcaColumn,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Tangent,
    TangentModified,
    Column,
}

impl From<Mode> for SelectionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Tangent => SelectionMode::Tangent,
            Mode::TangentModified => SelectionMode::TangentModified,
            Mode::Column => SelectionMode::Column,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisArg {
    Independent,
    Dependent,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "completion")]
    pub model: Model,
    #[arg(long, default_value_t = 70)]
    pub p1: usize,
    #[arg(long, default_value_t = 70)]
    pub p2: usize,
    /// Nonzero singular values of the truth, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1,0.5,0.5,0.5,0.5,0.5,0.1,0.1")]
    pub spectrum: Vec<f64>,
    /// Target incoherence of the truth's column and row spaces.
    #[arg(long)]
    pub coherence: Option<f64>,
    /// Observed entries, functionals or replicates.
    #[arg(long, short = 'n', default_value_t = 3186)]
    pub observations: usize,
    /// Target SNR; the noise level is calibrated to it.
    #[arg(long, conflicts_with = "noise")]
    pub snr: Option<f64>,
    /// Noise level (σ, or δ for denoising) used as is.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Strength of the structured perturbation in denoising.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "svt")]
    pub estimator: Estimator,
    /// Penalty for svt/als. Without it svt cross-validates; als requires it.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Rank cap for als, spectral and pca.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Observation file (entrywise CSV) or directory (replicates, or y.csv + A_*.csv).
    #[arg(long)]
    pub obs: PathBuf,
    /// Matrix dimensions as P1xP2 for entrywise files; otherwise taken from
    /// the truth sidecar or the largest indices.
    #[arg(long)]
    pub dims: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct StabilityArgs {
    #[arg(long, default_value_t = ss3::stability::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Number of bags (even: complementary halves).
    #[arg(long, default_value_t = ss3::stability::DEFAULT_BAGS)]
    pub bags: usize,
    #[arg(long, value_enum, default_value = "tangent")]
    pub mode: Mode,
    /// Materialize the whole σ_min curve instead of its boundary points.
    #[arg(long)]
    pub full_curve: bool,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Estimate matrix (or column basis for pca); `.bin` writes binary.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StabilizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub stability: StabilityArgs,
    /// Report JSON; selected bases are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Estimate matrix, or a stabilize report JSON.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Truth sidecar JSON, or a plain matrix file.
    #[arg(long)]
    pub truth: PathBuf,
    /// Singular values at or below this (relative) level count as zero.
    #[arg(long, default_value_t = ss3::linalg::RANK_TOL)]
    pub rank_tol: f64,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub stability: StabilityArgs,
    /// Truth sidecar; enables the oracle bounds.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Data model JSON written by `generate` (needed with --truth).
    #[arg(long)]
    pub data_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "independent")]
    pub basis: BasisArg,
    #[arg(long, default_value_t = ss3::bounds::DEFAULT_MC_REPS)]
    pub mc_reps: usize,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// table1, table2, fig_kappa, fig_top3, alpha_sweep, denoise_bounds or
    /// linear_vs_completion (dashes also accepted).
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    /// JSON config; missing fields take the preset's defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: out/<preset>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One or more α levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub bags: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    /// Fixed penalty instead of the preset's λ selection.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Target SNRs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub snr: Option<Vec<f64>>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub dry_run: bool,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: ss3::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let res = match cli.command {
        Command::Generate(a) => cmd::generate(a),
        Command::Estimate(a) => cmd::estimate(a),
        Command::Stabilize(a) => cmd::stabilize(a),
        Command::Metrics(a) => cmd::metrics(a),
        Command::Bounds(a) => cmd::bounds(a),
        Command::Experiment(a) => cmd::experiment(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<ss3::Error>() {
        Some(ss3::Error::Numerical(_)) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}
