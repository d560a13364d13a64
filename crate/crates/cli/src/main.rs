//! `hwrec`: benchmark models on devices, rank them, and train recommenders.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

use config::Preset;
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "hwrec", version, about = "Hardware-aware recommendation of pre-trained models")]
struct Cli {
    /// Store directory.
    #[arg(long, env = "HWREC_HOME", global = true)]
    home: Option<PathBuf>,
    /// JSON file with defaults for weights, preset, composite, policy and hyper.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format for anything printed as a table.
    #[arg(long, value_enum, default_value = "text", global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted synthetic world: registries plus a world fixture.
    Synthgen {
        /// World spec as a JSON file or inline JSON.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a registry file and load it into the store.
    Ingest {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        file: PathBuf,
    },
    /// Benchmark (model, dataset) pairs on one device and append the records.
    Bench(BenchArgs),
    /// Rank models for a dataset on a device from stored benchmarks.
    Rank(RankArgs),
    /// Train a similarity scorer on stored benchmarks.
    Train(TrainArgs),
    /// Recommend models for a dataset on a device with a trained scorer.
    Recommend(RecommendArgs),
    /// Kendall tau-b between a predicted and a reference ranking.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Models,
    Hardware,
    Tasks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SensorArg {
    Host,
    Scripted,
    Synthetic,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    hardware: String,
    /// JSON array of {model_id, task_id, dataset_size?, base_ms?, per_sample_ms?, accuracy?}.
    #[arg(long)]
    pairs: PathBuf,
    /// Sensor provider; defaults to $HWREC_SENSOR, then synthetic.
    #[arg(long, value_enum)]
    sensor: Option<SensorArg>,
    /// Stabilization policy as a JSON file or inline JSON.
    #[arg(long)]
    policy: Option<String>,
    /// World fixture from `synthgen`; drives workloads and synthetic sensors.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Forward passes per sweep batch size.
    #[arg(long, default_value_t = 1)]
    sweep_repeats: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankMethodArg {
    Copeland,
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatisticArg {
    Mean,
    Median,
}

#[derive(Debug, Args)]
struct WeightArgs {
    /// Weight config as a JSON file or inline JSON.
    #[arg(long)]
    weights: Option<String>,
    /// Built-in weight config; ignored when --weights is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    hardware: String,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long, value_enum, default_value = "copeland")]
    method: RankMethodArg,
    #[arg(long, value_enum, default_value = "mean")]
    statistic: StatisticArg,
    /// Metric used as f(α) by the objective method.
    #[arg(long, default_value = "accuracy")]
    performance: String,
    /// Also write the ranking to this file (.csv or JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainMode {
    /// Task and hardware token.
    Fusion,
    /// Task token only, trained on model-quality metrics.
    Task,
    /// Hardware token only, trained on hardware metrics.
    Hardware,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "fusion")]
    mode: TrainMode,
    /// Store directory holding registries and records; defaults to --home.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training settings as a JSON file or inline JSON.
    #[arg(long)]
    hyper: Option<String>,
    #[command(flatten)]
    weights: WeightArgs,
    /// Where to write the trained scorer.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the per-epoch training log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RecommendMode {
    Fusion,
    Shadow,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long, value_enum, default_value = "fusion")]
    mode: RecommendMode,
    #[arg(long)]
    task: String,
    #[arg(long)]
    hardware: String,
    /// Trained scorer; the task selector's scorer in shadow mode.
    #[arg(long)]
    scorer: PathBuf,
    /// Hardware selector's scorer (shadow mode).
    #[arg(long)]
    hw_scorer: Option<PathBuf>,
    /// Refine the first-pass top K with stored benchmark aggregates.
    #[arg(long)]
    top_k: Option<usize>,
    /// Selector weights for shadow mode, e.g. {"task": 0.5, "hardware": 0.5}.
    #[arg(long)]
    selector_weights: Option<String>,
    /// Also write the ranking to this file (.csv or JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
