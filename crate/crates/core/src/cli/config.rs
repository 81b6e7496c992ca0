//! Run configuration shared by the pipeline subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::qjump::{AtomParams, Stop};
use crate::qrngclient::QrngEndpointConfig;
use crate::stats::{uniform_edges, DEFAULT_CHECKPOINTS};
use crate::synth::SynthSpec;
use crate::timbre::{SequenceMode, TimbrePalette};

/// Where the run's randomness comes from. Exactly one per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// SplitMix64 seed.
    Seed(u64),
    /// Raw quantum byte file.
    Qbytes(PathBuf),
    /// Bytes fetched from an online service, cached to a file.
    Remote(RemoteSource),
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Seed(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSource {
    #[serde(default)]
    pub endpoint: QrngEndpointConfig,
    /// Bytes to draw from the service.
    #[serde(default = "default_remote_count")]
    pub count: usize,
    pub cache: PathBuf,
    /// Never contact the network; the cache must already hold `count` bytes.
    #[serde(default)]
    pub offline: bool,
}

pub fn default_remote_count() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "default_hist_hi")]
    pub hi: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Snapshot sizes; when absent the defaults that fit the record are used,
    /// followed by the full record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
}

fn default_hist_hi() -> f64 {
    5.0
}

fn default_bins() -> usize {
    100
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: default_hist_hi(),
            bins: default_bins(),
            checkpoints: None,
        }
    }
}

impl HistogramConfig {
    pub fn edges(&self) -> Result<Vec<f64>, CliError> {
        uniform_edges(self.lo, self.hi, self.bins)
            .map_err(|e| CliError::Config(format!("histogram: {e}")))
    }

    pub fn resolve_checkpoints(&self, available: usize) -> Vec<usize> {
        match &self.checkpoints {
            Some(c) => c.clone(),
            None => {
                let mut c: Vec<usize> = DEFAULT_CHECKPOINTS
                    .iter()
                    .copied()
                    .filter(|&n| n <= available)
                    .collect();
                if available > 0 && c.last() != Some(&available) {
                    c.push(available);
                }
                c
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    #[default]
    CumulativeHarmonic,
    GroupSwitch,
    /// Each histogram snapshot becomes one held spectrum.
    HistogramSuccession,
}

impl PipelineMode {
    pub fn sequence_mode(self) -> Option<SequenceMode> {
        match self {
            PipelineMode::CumulativeHarmonic => Some(SequenceMode::CumulativeHarmonic),
            PipelineMode::GroupSwitch => Some(SequenceMode::GroupSwitch),
            PipelineMode::HistogramSuccession => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimbreConfig {
    #[serde(default)]
    pub mode: PipelineMode,
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Length of the segment after the last audible emission, in seconds.
    #[serde(default = "default_hold")]
    pub total_hold: f64,
    /// Emissions mapped to timbre changes.
    #[serde(default = "default_audible")]
    pub audible_events: usize,
    /// Harmonics per histogram spectrum.
    #[serde(default = "default_max_partials")]
    pub max_partials: usize,
    /// Hold per snapshot in histogram-succession mode, in seconds.
    #[serde(default = "default_hold")]
    pub snapshot_hold: f64,
}

fn one() -> f64 {
    1.0
}

fn default_hold() -> f64 {
    2.0
}

fn default_audible() -> usize {
    12
}

fn default_max_partials() -> usize {
    16
}

impl Default for TimbreConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::default(),
            time_scale: 1.0,
            total_hold: default_hold(),
            audible_events: default_audible(),
            max_partials: default_max_partials(),
            snapshot_hold: default_hold(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SonogramConfig {
    pub window: usize,
    pub hop: usize,
}

impl Default for SonogramConfig {
    fn default() -> Self {
        Self {
            window: 4096,
            hop: 1024,
        }
    }
}

fn default_stop() -> Stop {
    Stop::NEvents(1000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub atom: AtomParams,
    #[serde(default = "default_stop")]
    pub stop: Stop,
    #[serde(default)]
    pub histogram: HistogramConfig,
    /// Palette JSON file; the built-in palette when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palette: Option<PathBuf>,
    #[serde(default)]
    pub timbre: TimbreConfig,
    #[serde(default)]
    pub synth: SynthSpec,
    #[serde(default)]
    pub sonogram: SonogramConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: SourceSpec::default(),
            atom: AtomParams::default(),
            stop: default_stop(),
            histogram: HistogramConfig::default(),
            palette: None,
            timbre: TimbreConfig::default(),
            synth: SynthSpec::default(),
            sonogram: SonogramConfig::default(),
            output_dir: None,
        }
    }
}

/// A loaded configuration plus the source hash a replayed metadata file
/// expects.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub expected_source_sha256: Option<String>,
}

/// Reads a run config, or the `config` section of a metadata file written
/// by a previous run.
pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    let (config_value, expected) = match value.get("config") {
        Some(inner) if value.get("tool").is_some() => (
            inner.clone(),
            value
                .pointer("/source/sha256")
                .and_then(Value::as_str)
                .map(str::to_string),
        ),
        _ => (value, None),
    };
    let config: RunConfig = serde_json::from_value(config_value)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    Ok(LoadedConfig {
        config,
        expected_source_sha256: expected,
    })
}

impl RunConfig {
    /// Checks parameters and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        self.atom
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Stop::TMax(t) = self.stop {
            if !(t.is_finite() && t >= 0.0) {
                return Err(CliError::Config(format!("t_max must be >= 0, got {t}")));
            }
        }
        self.histogram.edges()?;
        if let Some(c) = &self.histogram.checkpoints {
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config("checkpoints must be strictly increasing".into()));
            }
            if let (Stop::NEvents(n), Some(&last)) = (self.stop, c.last()) {
                if last > n {
                    return Err(CliError::Config(format!(
                        "checkpoint {last} exceeds n_events {n}"
                    )));
                }
            }
        }
        self.synth
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let t = &self.timbre;
        if !(t.time_scale.is_finite() && t.time_scale > 0.0) {
            return Err(CliError::Config(format!("time_scale must be positive, got {}", t.time_scale)));
        }
        if !(t.total_hold > 0.0 && t.snapshot_hold > 0.0) {
            return Err(CliError::Config("hold durations must be positive".into()));
        }
        if t.max_partials == 0 {
            return Err(CliError::Config("max_partials must be >= 1".into()));
        }
        let s = &self.sonogram;
        if !s.window.is_power_of_two() || s.window < 2 || s.hop == 0 || s.hop > s.window {
            return Err(CliError::Config(format!(
                "sonogram window {} / hop {} invalid",
                s.window, s.hop
            )));
        }
        if let Some(p) = &self.palette {
            require_file(p, "palette")?;
        }
        match &self.source {
            SourceSpec::Seed(_) => {}
            SourceSpec::Qbytes(p) => require_file(p, "quantum byte file")?,
            SourceSpec::Remote(r) => {
                r.endpoint
                    .validate()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                if r.count == 0 {
                    return Err(CliError::Config("remote count must be >= 1".into()));
                }
                if r.offline {
                    require_file(&r.cache, "offline cache")?;
                }
            }
        }
        Ok(())
    }

    pub fn load_palette(&self) -> Result<TimbrePalette, CliError> {
        match &self.palette {
            Some(p) => TimbrePalette::load(p).map_err(|e| CliError::Config(e.to_string())),
            None => Ok(TimbrePalette::default()),
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", path.display())))
    }
}

/// Parses a decimal or `0x`-prefixed hexadecimal seed.
pub fn parse_seed(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|_| format!("invalid seed {text:?}: expected decimal or 0x-hex"))
}
