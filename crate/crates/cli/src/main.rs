//! `hazardlab`: simulate, ingest, analyze and model trust-rating sessions.

mod commands;
mod error;
mod output;
mod pipeline;
mod plots;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hazardlab::analytics::{PairingUnit, TimeCenter};
use hazardlab::eventlog::DEFAULT_MEDIAN_WINDOW;
use hazardlab::hazardmodel::{Cohort, DEFAULT_INTERVAL_WIDTH};

use error::CliError;

const THREADS_VAR: &str = "HAZARDLAB_THREADS";

#[derive(Parser)]
#[command(name = "hazardlab", version, about = "Survival analysis of trust-rating times")]
struct Cli {
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event log and its ground truth.
    Simulate(SimulateArgs),
    /// Parse, latency-correct, screen and segment an event log.
    Ingest(IngestArgs),
    /// Trust-change statistics, t-test and rating-time histograms.
    Analyze(AnalyzeArgs),
    /// Fit the hazard model to one cohort of grasps.
    Fit(FitArgs),
    /// Summarize and check convergence of a saved posterior.
    Diagnose(DiagnoseArgs),
    /// Posterior-predictive survival curves against the empirical curve.
    Predict(PredictArgs),
    /// Run analyze, fit and predict and write every table and figure.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Clone)]
pub struct EventsArgs {
    /// Line-delimited event log.
    #[arg(long)]
    pub events: PathBuf,
    /// Rolling-median window (latency probes, odd).
    #[arg(long, default_value_t = DEFAULT_MEDIAN_WINDOW)]
    pub window: usize,
    /// Exclude subjects whose median RTT exceeds this (ms).
    #[arg(long, default_value_t = 300.0)]
    pub latency_ms: f64,
    /// Exclude subjects with a trial longer than this multiple of the median trial.
    #[arg(long, default_value_t = 3.0)]
    pub trial_factor: f64,
    /// Keep subjects with fewer than 10 trials of 4 grasps.
    #[arg(long)]
    pub keep_incomplete: bool,
    /// Skip subject exclusion entirely.
    #[arg(long)]
    pub no_exclusions: bool,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON simulation config; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of subjects.
    #[arg(long)]
    pub subjects: Option<usize>,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CenterArg {
    Pick,
    Place,
}

impl From<CenterArg> for TimeCenter {
    fn from(c: CenterArg) -> Self {
        match c {
            CenterArg::Pick => TimeCenter::Pick,
            CenterArg::Place => TimeCenter::Place,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PairingArg {
    Subject,
    SubjectGrasp,
}

impl From<PairingArg> for PairingUnit {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::Subject => PairingUnit::Subject,
            PairingArg::SubjectGrasp => PairingUnit::SubjectGrasp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CohortArg {
    Early,
    Final,
}

impl From<CohortArg> for Cohort {
    fn from(c: CohortArg) -> Self {
        match c {
            CohortArg::Early => Cohort::Early,
            CohortArg::Final => Cohort::Final,
        }
    }
}

#[derive(Args, Clone)]
pub struct AnalysisOptions {
    /// Histogram bin width (s).
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    /// Time origin of the rating-time histograms.
    #[arg(long, value_enum, default_value = "place")]
    pub center: CenterArg,
    /// Pairing unit of the Gamma/Echo t-test.
    #[arg(long, value_enum, default_value = "subject")]
    pub pairing: PairingArg,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    #[command(flatten)]
    pub options: AnalysisOptions,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Clone)]
pub struct ModelOptions {
    /// Interval width of the Poisson expansion (s).
    #[arg(long, default_value_t = DEFAULT_INTERVAL_WIDTH)]
    pub width: f64,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// Retained draws per chain.
    #[arg(long, default_value_t = 5000)]
    pub draws: usize,
    #[arg(long, default_value_t = 2000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include unrated grasps as right-censored at their horizon.
    #[arg(long)]
    pub censored: bool,
    /// JSON array of four priors, e.g. [{"kind":"normal","mean":0,"sd":2}, ...].
    #[arg(long)]
    pub priors: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    /// Grasps to fit: early (all but the last of each trial) or final.
    #[arg(long, value_enum)]
    pub cohort: CohortArg,
    #[command(flatten)]
    pub model: ModelOptions,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Posterior draws written by `fit`.
    #[arg(long)]
    pub posterior: PathBuf,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Clone)]
pub struct CurveOptions {
    /// End of the time grid (s); 30 for early, 60 for final by default.
    #[arg(long)]
    pub grid_end: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub grid_step: f64,
    /// Number of posterior curves.
    #[arg(long, default_value_t = 200)]
    pub curves: usize,
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    /// Posterior draws written by `fit`.
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long, value_enum)]
    pub cohort: CohortArg,
    #[command(flatten)]
    pub curves: CurveOptions,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    #[arg(long, value_enum, default_value = "final")]
    pub cohort: CohortArg,
    #[command(flatten)]
    pub options: AnalysisOptions,
    #[command(flatten)]
    pub model: ModelOptions,
    #[command(flatten)]
    pub curves: CurveOptions,
    #[command(flatten)]
    pub output: OutArgs,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();

    let result = init_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Ingest(a) => commands::ingest(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Fit(a) => commands::fit(&a, cli.quiet),
        Command::Diagnose(a) => commands::diagnose(&a, cli.quiet),
        Command::Predict(a) => commands::predict(&a, cli.quiet),
        Command::Report(a) => commands::report(&a, cli.quiet),
    });
    match result {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
