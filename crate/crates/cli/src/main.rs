//! `hyperseg` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "hyperseg", version, about = "Hypercolumn interactive segmentation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract compressed hypercolumn features for one frame.
    Extract(ExtractArgs),
    /// Per-layer depth compression error and retained energy of a feature file.
    CompressReport(CompressReportArgs),
    /// Train on synthetic scenes and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a frames/masks dataset.
    Eval(EvalArgs),
    /// Sample training-style clicks for a ground-truth mask.
    SimulateClicks(SimulateClicksArgs),
    /// Serve the session API.
    Serve(ServeArgs),
    /// Write a synthetic frames/masks dataset.
    SynthData(SynthDataArgs),
}

#[derive(Args, Debug)]
struct BackboneArgs {
    /// Backbone directory; the seeded toy backbone when absent.
    #[arg(long)]
    backbone: Option<PathBuf>,
    /// Toy backbone input size, `WxH`.
    #[arg(long, default_value = "32x32", conflicts_with = "backbone")]
    tile: String,
    /// Toy backbone seed.
    #[arg(long, default_value_t = 19, conflicts_with = "backbone")]
    backbone_seed: u64,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    backbone: BackboneArgs,
    /// `halving`, `full` or `layer:rank,...`.
    #[arg(long, default_value = "halving")]
    ranks: String,
    /// Keep every tap uncompressed (input for `compress-report`).
    #[arg(long, conflicts_with = "ranks")]
    raw: bool,
    /// Print the tile layout and exit without running the backbone.
    #[arg(long)]
    layout_only: bool,
    /// Output container; the manifest goes next to it as `.json`.
    #[arg(long, required_unless_present = "layout_only")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompressReportArgs {
    #[arg(long)]
    features: PathBuf,
    /// `halving`, `full` or `layer:rank,...` over the file's layers.
    #[arg(long, default_value = "halving")]
    ranks: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TOML or JSON training config; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// `sgd` or `adam`.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    num_scenes: Option<usize>,
    #[arg(long)]
    num_heads: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Total simulated clicks per image, split positive first.
    #[arg(long, default_value_t = 10)]
    clicks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateClicksArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    pos: usize,
    #[arg(long, default_value_t = 5)]
    neg: usize,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Checkpoint directory; repeat to serve several.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    store: PathBuf,
    /// Resident session bytes before least recently used ones are unloaded.
    #[arg(long, default_value_t = 1 << 30)]
    memory_budget: usize,
    /// Order heads by agreement with the clicks instead of head index.
    #[arg(long)]
    rank_by_clicks: bool,
}

#[derive(Args, Debug)]
struct SynthDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed `WxH`; random per scene when absent.
    #[arg(long)]
    size: Option<String>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<hyperseg_core::Error> for CliError {
    fn from(e: hyperseg_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::CompressReport(a) => commands::compress_report(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::SimulateClicks(a) => commands::simulate_clicks(a),
        Command::Serve(a) => commands::serve(a),
        Command::SynthData(a) => commands::synth_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
