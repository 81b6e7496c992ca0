//! The `qtimbre` command line tool.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error,
//! 4 network error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use thiserror::Error;

pub mod commands;
pub mod config;
mod source;

pub use commands::run;
pub use config::{load_config, parse_seed, LoadedConfig, PipelineMode, RunConfig, SourceSpec};
pub use source::{RunSource, SourceInfo};

use crate::qjump::Model;
use crate::qrngclient::QrngError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("network error: {0}")]
    Network(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Network(_) => 4,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<QrngError> for CliError {
    fn from(e: QrngError) -> Self {
        match e {
            QrngError::NetworkFailure { .. }
            | QrngError::ServiceRefused
            | QrngError::MalformedPayload(_) => CliError::Network(e.to_string()),
            QrngError::InvalidRequest(_) => CliError::Config(e.to_string()),
            QrngError::IoFailure { .. } | QrngError::CacheExhausted { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

fn parse_kebab<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(text.to_string())).map_err(|e| e.to_string())
}

fn parse_model(text: &str) -> Result<Model, String> {
    parse_kebab(text)
}

fn parse_mode(text: &str) -> Result<PipelineMode, String> {
    parse_kebab(text)
}

#[derive(Debug, Parser)]
#[command(name = "qtimbre", version, about = "Two-level atom emission statistics rendered as timbre")]
pub struct Cli {
    /// Run configuration JSON (or a metadata.json from an earlier run).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// SplitMix64 seed, decimal or 0x-hex.
    #[arg(long, global = true, value_parser = parse_seed)]
    pub seed: Option<u64>,
    /// Raw quantum random byte file.
    #[arg(long, global = true)]
    pub qbytes: Option<PathBuf>,
    /// Output directory for pipeline commands, output file otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an emission trajectory and export it as CSV.
    Simulate(PipelineArgs),
    /// Histogram snapshots of inter-emission intervals.
    Histogram(HistogramArgs),
    /// Full pipeline: trajectory, histograms, timbre events, WAV and sonogram.
    Sonify(PipelineArgs),
    /// Reorder a JSON-lines event list with a random permutation.
    Shuffle(ShuffleArgs),
    /// Serial correlation and longest-repeat report for a stream.
    Analyze(AnalyzeArgs),
    /// Download quantum random bytes into a cache file.
    FetchQrng(FetchArgs),
    /// Render a timbre event JSON file to WAV.
    Render(RenderArgs),
    /// STFT magnitude grid of a WAV file as CSV.
    Sonogram(SonogramArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct PipelineArgs {
    /// hazard-renewal or quantum-jump.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<Model>,
    /// Rabi angular frequency in rad/s.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Decay rate in 1/s.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Quantum-jump time step in s.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, conflicts_with = "t_max")]
    pub n_events: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Palette JSON file.
    #[arg(long)]
    pub palette: Option<PathBuf>,
    /// cumulative-harmonic, group-switch or histogram-succession.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<PipelineMode>,
    #[arg(long)]
    pub time_scale: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct HistogramArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Emission CSV to histogram instead of simulating.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
    /// Comma-separated snapshot sizes.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
}

#[derive(Debug, Args, Clone)]
pub struct ShuffleArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// seed:N or qbytes:FILE; overrides --seed/--qbytes.
    #[arg(long)]
    pub source: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// bytes (raw file) or text (one real per token).
    #[arg(long, default_value = "bytes")]
    pub format: String,
    #[arg(long, default_value_t = 8)]
    pub max_lag: usize,
}

#[derive(Debug, Args, Clone)]
pub struct FetchArgs {
    #[arg(long, default_value_t = config::default_remote_count())]
    pub count: usize,
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct RenderArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value_t = 44_100)]
    pub sr: u32,
    #[arg(long)]
    pub crossfade: Option<f64>,
    #[arg(long)]
    pub gain: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct SonogramArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 4096)]
    pub window: usize,
    #[arg(long, default_value_t = 1024)]
    pub hop: usize,
}
