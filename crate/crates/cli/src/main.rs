//! `voxquery` — train, evaluate and stream the voice-query recognizer.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 data errors (missing or
//! malformed files), 4 numeric failures (divergence).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "voxquery", version, about = "Streaming voice-query recognition engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Model variant: crnn-750m, crnn-750 or rnn-750m.
    #[arg(long, default_value = "crnn-750m")]
    variant: String,
    /// Override conv output channels.
    #[arg(long)]
    conv_channels: Option<usize>,
    /// Override GRU hidden units.
    #[arg(long)]
    gru_hidden: Option<usize>,
    /// Override feature-conv channels.
    #[arg(long)]
    feature_channels: Option<usize>,
    /// Override classifier hidden units.
    #[arg(long)]
    classifier_hidden: Option<usize>,
    /// Override the class count (N known queries + 1 unknown).
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Manifest of `path<TAB>label` lines; the highest label is "unknown".
    #[arg(long)]
    manifest: PathBuf,
    /// Directory that will hold the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Key=value config file (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Disable training-time augmentation.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Split to score: train, validation or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Fixed decision threshold; when absent it is picked on the validation
    /// split at --target-far.
    #[arg(long)]
    alpha: Option<f32>,
    #[arg(long, default_value_t = 0.01)]
    target_far: f64,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RocArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StreamArgs {
    #[arg(long)]
    weights: PathBuf,
    /// WAV input; raw 16-bit little-endian PCM is read from stdin when absent.
    #[arg(long)]
    wav: Option<PathBuf>,
    /// Prediction interval in milliseconds.
    #[arg(long, default_value_t = 100)]
    interval_ms: u32,
    /// Samples per push; purely an I/O choice, the output never changes.
    #[arg(long, default_value_t = 160)]
    chunk_size: usize,
    /// Reject predictions below this probability as unknown.
    #[arg(long)]
    alpha: Option<f32>,
    /// Report per-hop latency statistics and the real-time factor.
    #[arg(long)]
    profile: bool,
}

#[derive(Args, Debug)]
struct FootprintArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Frames processed per second of audio.
    #[arg(long, default_value_t = 100)]
    frames_per_s: u64,
    /// Classifier invocations per second of audio.
    #[arg(long, default_value_t = 10)]
    classify_per_s: u64,
}

#[derive(Args, Debug)]
struct AugmentPreviewArgs {
    /// Input WAV to augment.
    #[arg(long)]
    wav: PathBuf,
    #[arg(long, default_value = "augment-preview")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of randomized full-augmentation variants to write.
    #[arg(long, default_value_t = 3)]
    count: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a manifest (80/10/10 split per class).
    Train(TrainArgs),
    /// Score a split at a fixed or auto-picked threshold; writes ROC too.
    Eval(EvalArgs),
    /// Print or write the alpha/FAR/QER sweep for a split.
    Roc(RocArgs),
    /// Run streaming inference over a WAV or raw PCM on stdin.
    Stream(StreamArgs),
    /// Print the per-layer parameter and multiply budget.
    Footprint(FootprintArgs),
    /// Write augmented WAV variants next to the original for listening.
    AugmentPreview(AugmentPreviewArgs),
}

/// Error classes map to distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Roc(args) => commands::eval::run_roc(args),
        Command::Stream(args) => commands::stream::run(args),
        Command::Footprint(args) => commands::footprint::run(args),
        Command::AugmentPreview(args) => commands::augment_preview::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
