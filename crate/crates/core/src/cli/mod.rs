//! Command-line surface.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Exit codes of the binary.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const DIVERGED: u8 = 3;
    pub const UNKNOWN_KEY: u8 = 4;
}

/// Errors raised by the commands themselves rather than the library.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
}

#[derive(Parser, Debug)]
#[command(
    name = "latentvid",
    version,
    about = "Learn latent video dictionaries and generate from them"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Render a synthetic identity x motion grid to NAVS plus a manifest.
    MakeData(MakeDataFlags),
    /// Train generator, GRU and latent dictionary on a NAVS file.
    Train(TrainFlags),
    /// Generate clips for dictionary entry pairs.
    Generate(GenerateFlags),
    /// Generate frames from interpolated transient codes.
    Interpolate(InterpolateFlags),
    /// Generate every held-out cell of a manifest.
    Exchange(ExchangeFlags),
    /// Score a generated set against a real one.
    Eval(EvalFlags),
}

#[derive(Args, Debug, Serialize)]
pub struct MakeDataFlags {
    /// JSON file with defaults for any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub motions: Option<usize>,
    /// Held-out cells as `i:j,...` (0-based identity:motion).
    #[arg(long)]
    pub holdout: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Frame height and width.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Output NAVS path; the manifest goes to `<stem>.manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainFlags {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset manifest; defaults to `<data stem>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss log; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub lr_gen: Option<f64>,
    #[arg(long)]
    pub lr_rnn: Option<f64>,
    #[arg(long)]
    pub lr_latent: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_t: Option<f64>,
    /// Triplet margin.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Temporal window separating positives from negatives.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub triplets: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// e.g. `static=per-video,transient=per-class`.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub static_dim: Option<usize>,
    #[arg(long)]
    pub transient_dim: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Also save the checkpoint every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct GenerateFlags {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Static entry name, or `*` for all.
    #[arg(long = "static")]
    pub static_name: Option<String>,
    /// Transient entry name, or `*` for all.
    #[arg(long = "transient")]
    pub transient_name: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
pub struct InterpolateFlags {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long = "transient")]
    pub transient_name: Option<String>,
    #[arg(long = "static")]
    pub static_name: Option<String>,
    /// 1-based frame index of the start code.
    #[arg(long)]
    pub from_frame: Option<usize>,
    /// 1-based frame index of the end code.
    #[arg(long)]
    pub to_frame: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExchangeFlags {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalFlags {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub gen: Option<PathBuf>,
    #[arg(long)]
    pub extractor_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Map an error chain onto the exit-code contract.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use latentvid::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<CliError>().is_some() {
            return exit::USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Diverged { .. } | E::NonFinite(_) => exit::DIVERGED,
                E::UnknownName(_) => exit::UNKNOWN_KEY,
                E::InvalidArgument(_) | E::ShapeMismatch { .. } => exit::USAGE,
                _ => exit::FAILURE,
            };
        }
    }
    exit::FAILURE
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::MakeData(f) => commands::make_data(f),
        Command::Train(f) => commands::train(f),
        Command::Generate(f) => commands::generate(f),
        Command::Interpolate(f) => commands::interpolate(f),
        Command::Exchange(f) => commands::exchange(f),
        Command::Eval(f) => commands::eval(f),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
