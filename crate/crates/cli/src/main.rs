//! `volspike` — config-driven pipeline from raw daily data and whale-alert
//! tweets to trained forecasters, metrics, and backtests.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "volspike", version, about = "Bitcoin volatility-spike forecasting pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "volspike.toml")]
    config: PathBuf,
    /// Override the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a whale-alert tweet corpus into the four daily flow columns.
    ParseTweets,
    /// Merge data sources, compute indicators and targets, write the feature CSV.
    Prepare,
    /// Train one model and write its checkpoint and history.
    Train,
    /// Grid-search hyperparameters; write the leaderboard and checkpoints.
    Grid,
    /// Score the checkpoint on the test split: metrics and threshold sweep.
    Evaluate,
    /// Rank features by ablation attribution.
    Ablate,
    /// Run the trading strategies on the test-split forecasts.
    Backtest,
}

/// Machine-readable failure categories, one exit code each.
fn categorize(err: &anyhow::Error) -> (&'static str, u8) {
    use volspike_core::Error as E;
    if let Some(core) = err.downcast_ref::<E>() {
        return match core {
            E::InvalidConfig(_) | E::EmptyGrid => ("config", 2),
            E::MissingFile(_) | E::Io(_) => ("io", 3),
            E::MissingDateColumn(_)
            | E::BadDate { .. }
            | E::DuplicateDate(_)
            | E::NonMonotoneDates(_)
            | E::DateGap(_)
            | E::ColumnLength { .. }
            | E::UnknownColumn(_)
            | E::FillPolicyOverlap(_)
            | E::UnfilledColumn(_)
            | E::AllMissing(_)
            | E::BoundaryOutOfRange(_)
            | E::BoundariesUnordered { .. }
            | E::EmptySplit(_, _)
            | E::Csv(_)
            | E::NonPositivePrice { .. }
            | E::SeriesTooShort { .. }
            | E::WindowTooSmall(_)
            | E::TransformDomain { .. }
            | E::InvalidCandle { .. }
            | E::LengthMismatch { .. }
            | E::ZeroVariance => ("data", 4),
            E::ShapeMismatch(_)
            | E::NonFiniteActivation { .. }
            | E::MissingTensor(_)
            | E::Checkpoint(_) => ("model", 5),
            E::FrameTooShort { .. } | E::NonFiniteLoss { .. } | E::GridPoint { .. } => {
                ("train", 6)
            }
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return ("io", 3);
    }
    let text = err.to_string();
    if text.starts_with("config") {
        ("config", 2)
    } else {
        ("pipeline", 1)
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let violations = cfg.violations();
    if !violations.is_empty() {
        anyhow::bail!("config: invalid configuration:\n  - {}", violations.join("\n  - "));
    }
    match cli.command {
        Command::ParseTweets => pipeline::cmd_parse_tweets(&cfg),
        Command::Prepare => pipeline::cmd_prepare(&cfg),
        Command::Train => pipeline::cmd_train(&cfg),
        Command::Grid => pipeline::cmd_grid(&cfg),
        Command::Evaluate => pipeline::cmd_evaluate(&cfg),
        Command::Ablate => pipeline::cmd_ablate(&cfg),
        Command::Backtest => pipeline::cmd_backtest(&cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (category, code) = categorize(&err);
            let payload = serde_json::json!({
                "error": category,
                "message": format!("{err:#}"),
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}
