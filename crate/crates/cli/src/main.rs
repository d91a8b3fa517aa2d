//! `midas`: ingest tracking data, mask it, train, impute, evaluate and analyse.

mod commands;
mod config;
mod io;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use midas::data::Sport;
use midas::masking::Scenario;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "midas", version, about = "Multi-agent trajectory imputation")]
struct Cli {
    /// Seed for every random choice (masks, initialisation, shuffling).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// soccer, basketball or football.
    #[arg(long, global = true, default_value = "soccer")]
    sport: Sport,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a tracking file (or synthetic data) into canonical window CSV.
    Preprocess(PreprocessArgs),
    /// Draw missing-data masks for a window file.
    Mask(MaskArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Impute masked windows with a trained checkpoint.
    Impute(ImputeArgs),
    /// Score a checkpoint against linear and spline baselines.
    Evaluate(EvaluateArgs),
    /// Physical statistics and pitch-control maps.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Measure imputation throughput.
    Bench(BenchArgs),
    /// Render trajectory and weight figures.
    #[command(subcommand)]
    Plot(PlotCommand),
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("source").required(true))]
pub struct PreprocessArgs {
    /// Canonical CSV, Metrica home/away CSV, SportVU JSON or NRTSI .npy.
    #[arg(long, group = "source")]
    pub input: Option<PathBuf>,
    /// Generate this many synthetic windows instead of reading a file.
    #[arg(long, group = "source")]
    pub synthetic: Option<usize>,
    /// Frame rate of canonical CSV input when it differs from the target rate.
    #[arg(long)]
    pub source_hz: Option<f64>,
    /// Also write contiguous train/validation/test files next to the output.
    #[arg(long)]
    pub split: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MaskArgs {
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long, default_value = "agentwise")]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long, default_value_t = midas::masking::DEFAULT_GUARD)]
    pub guard: usize,
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub windows: PathBuf,
    /// Validation windows. Without it the input is split by the sport's fractions.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// TOML file with model and training keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_batches: Option<usize>,
    /// Per-epoch loss log; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Where masks come from: a mask CSV, or fresh masks drawn from `--seed`.
#[derive(Debug, Args, Serialize)]
pub struct MaskSource {
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ImputeArgs {
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub masks: MaskSource,
    /// Imputed trajectories as canonical CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Initial, forward and backward predictions per agent-frame.
    #[arg(long)]
    pub dump_components: Option<PathBuf>,
    /// Ensemble weights per agent-frame.
    #[arg(long)]
    pub dump_weights: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub masks: MaskSource,
    /// Score these imputed trajectories instead of re-running the model for the final output.
    #[arg(long)]
    pub imputed: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Distance and sprint statistics per player and per method.
    Stats(StatsArgs),
    /// Pitch-control heatmap for one frame.
    Control(ControlArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Windows of one match in time order.
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub masks: MaskSource,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ControlArgs {
    #[arg(long)]
    pub windows: PathBuf,
    /// Frame index counted across all windows in file order.
    #[arg(long)]
    pub frame: usize,
    /// Use imputed positions from this checkpoint instead of ground truth.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub masks: MaskSource,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Report per-window inference latency.
    #[arg(long)]
    pub timing: bool,
    /// Windows to impute; synthetic windows of the sport's shape when omitted.
    #[arg(long)]
    pub windows: Option<PathBuf>,
    /// Randomly initialised default model when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Synthetic window count: 120 windows of 20 s cover a 40-minute match.
    #[arg(long, default_value_t = 120)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PlotCommand {
    /// Ground truth against imputed paths for one window.
    Trajectories(PlotTrajectoriesArgs),
    /// Ensemble weight curves for one agent.
    Weights(PlotWeightsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PlotTrajectoriesArgs {
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub imputed: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub sequence: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotWeightsArgs {
    /// CSV written by `impute --dump-weights`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Mask CSV used to shade missing frames.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub sequence: String,
    #[arg(long)]
    pub agent: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// A problem with how the command was invoked rather than with its inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let ctx = commands::Context { seed: cli.seed, sport: cli.sport };
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(&ctx, &a),
        Command::Mask(a) => commands::mask(&ctx, &a),
        Command::Train(a) => commands::train(&ctx, &a),
        Command::Impute(a) => commands::impute(&ctx, &a),
        Command::Evaluate(a) => commands::evaluate(&ctx, &a),
        Command::Analyze(AnalyzeCommand::Stats(a)) => commands::stats(&ctx, &a),
        Command::Analyze(AnalyzeCommand::Control(a)) => commands::control(&ctx, &a),
        Command::Bench(a) => commands::bench(&ctx, &a),
        Command::Plot(PlotCommand::Trajectories(a)) => commands::plot_trajectories(&ctx, &a),
        Command::Plot(PlotCommand::Weights(a)) => commands::plot_weights(&ctx, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
