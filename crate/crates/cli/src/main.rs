//! `epp` command-line tool.

mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "epp",
    version,
    about = "Popularity-debiased recommendation with evolving personal popularity"
)]
pub struct Cli {
    /// Flat key-value TOML configuration file.
    #[arg(long, global = true, env = "EPP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides a configuration key, e.g. `--set lr=0.01`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load, k-core filter and chronologically split a log, or generate a
    /// synthetic corpus with `--synth`.
    Prepare(PrepareArgs),
    /// Generate and split a synthetic corpus (same as `prepare --synth`).
    Synth(SynthArgs),
    /// Export local, personal and per-item popularity tables.
    Stats(StatsArgs),
    /// Train a model and write its checkpoint and per-epoch report.
    Train(TrainArgs),
    /// Write top-k recommendations for every user.
    Recommend(RecommendArgs),
    /// Score rankings against held-out clicks or synthetic preferences.
    Evaluate(EvaluateArgs),
    /// Grid over forecast horizons and alpha with intervened inference.
    Sweep(SweepArgs),
    /// Popular-item share of recommendations vs. the test clicks.
    BiasReport(EvaluateArgs),
    /// Emit tidy CSVs for timelines, moving averages, quality and bias plots.
    Plotdata(PlotArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Interaction log: user_id, item_id, rating, timestamp (tab or comma).
    #[arg(long, required_unless_present = "synth")]
    pub input: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub synth: bool,
    #[arg(long)]
    pub k_core: Option<usize>,
    #[arg(long)]
    pub grid_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub grid_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory; defaults to the dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub window_steps: Option<usize>,
    #[arg(long)]
    pub quantile: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output model directory.
    #[arg(long)]
    pub out: PathBuf,
    /// causal-epp, plain or ips.
    #[arg(long)]
    pub mode: Option<String>,
    /// mf or lightgcn.
    #[arg(long)]
    pub backbone: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub no_quality: bool,
    #[arg(long)]
    pub no_consistency: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub window_steps: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
pub enum InterventionArg {
    None,
    Intervened,
    EliminateP,
    Grid,
}

#[derive(Args, Debug)]
pub struct InferenceArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub intervention: InterventionArg,
    /// Fixed popularity for `--intervention grid`.
    #[arg(long, default_value_t = 0.0)]
    pub grid_p: f64,
    /// Fixed personal popularity for `--intervention grid`.
    #[arg(long, default_value_t = 0.0)]
    pub grid_s: f64,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub delta_item: Option<usize>,
    #[arg(long)]
    pub delta_user: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
pub enum TruthArg {
    /// Held-out test clicks outside the user's training items.
    Test,
    Validation,
    /// Top-k preferred items outside training (synthetic corpora only).
    Preference,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub truth: TruthArg,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Flat CSV rows instead of JSON.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub delta_item: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub delta_user: Vec<usize>,
    /// Inference-time alpha values; the trained alpha when omitted.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, value_enum, default_value = "test")]
    pub truth: TruthArg,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Adds quality-scatter and bias-bar exports.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
