//! Mapping of emission statistics onto the frequency axis.
//!
//! Histogram bins become harmonic intensities, measurement outcomes pick one
//! of two partial groups, and emission times mark timbral changes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qjump::{EmissionRecord, Outcome};
use crate::stats::Histogram;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimbreError {
    #[error("histogram has no in-range counts")]
    EmptyHistogram,
    #[error("palette needs at least two partial groups, found {0}")]
    PaletteTooSmall(usize),
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid event sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON in {path}: {message}")]
    Json { path: String, message: String },
}

/// One partial: a multiplier of the fundamental and its amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Partial {
    pub ratio: f64,
    pub amplitude: f64,
}

impl From<(f64, f64)> for Partial {
    fn from((ratio, amplitude): (f64, f64)) -> Self {
        Self { ratio, amplitude }
    }
}

impl From<Partial> for (f64, f64) {
    fn from(p: Partial) -> Self {
        (p.ratio, p.amplitude)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialGroup {
    pub partials: Vec<Partial>,
}

impl PartialGroup {
    pub fn new(partials: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self {
            partials: partials.into_iter().map(Partial::from).collect(),
        }
    }

    /// Sum-normalized spectrum of this group over `fundamental_hz`.
    pub fn spectrum(&self, fundamental_hz: f64) -> Spectrum {
        Spectrum::normalized(
            self.partials
                .iter()
                .map(|p| (p.ratio * fundamental_hz, p.amplitude)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimbrePalette {
    pub fundamental_hz: f64,
    pub groups: Vec<PartialGroup>,
}

impl Default for TimbrePalette {
    /// 220 Hz; group 0 odd harmonics 1,3,5,7 at 1/n; group 1 harmonics 1..8 at 1/n.
    fn default() -> Self {
        Self {
            fundamental_hz: 220.0,
            groups: vec![
                PartialGroup::new([1.0, 3.0, 5.0, 7.0].map(|n| (n, 1.0 / n))),
                PartialGroup::new((1..=8).map(|n| (n as f64, 1.0 / n as f64))),
            ],
        }
    }
}

impl TimbrePalette {
    pub fn validate(&self) -> Result<(), TimbreError> {
        if !(self.fundamental_hz.is_finite() && self.fundamental_hz > 0.0) {
            return Err(TimbreError::InvalidPalette(format!(
                "fundamental_hz must be positive, got {}",
                self.fundamental_hz
            )));
        }
        if self.groups.len() < 2 {
            return Err(TimbreError::PaletteTooSmall(self.groups.len()));
        }
        for (g, group) in self.groups.iter().enumerate() {
            if group.partials.is_empty() {
                return Err(TimbreError::InvalidPalette(format!("group {g} is empty")));
            }
            for (i, p) in group.partials.iter().enumerate() {
                if !(p.ratio.is_finite() && p.ratio > 0.0) {
                    return Err(TimbreError::InvalidPalette(format!(
                        "group {g} partial {i}: ratio must be positive"
                    )));
                }
                if !(p.amplitude.is_finite() && p.amplitude >= 0.0) {
                    return Err(TimbreError::InvalidPalette(format!(
                        "group {g} partial {i}: amplitude must be non-negative"
                    )));
                }
                if group.partials[..i].iter().any(|q| q.ratio == p.ratio) {
                    return Err(TimbreError::InvalidPalette(format!(
                        "group {g}: duplicate ratio {}",
                        p.ratio
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TimbreError> {
        let text = fs::read_to_string(path).map_err(|e| TimbreError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let palette: Self = serde_json::from_str(&text).map_err(|e| TimbreError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        palette.validate()?;
        Ok(palette)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Component {
    pub frequency_hz: f64,
    pub amplitude: f64,
}

impl From<(f64, f64)> for Component {
    fn from((frequency_hz, amplitude): (f64, f64)) -> Self {
        Self {
            frequency_hz,
            amplitude,
        }
    }
}

impl From<Component> for (f64, f64) {
    fn from(c: Component) -> Self {
        (c.frequency_hz, c.amplitude)
    }
}

/// Sinusoidal components with strictly increasing frequencies and
/// amplitudes summing to at most one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Spectrum {
    components: Vec<Component>,
}

const AMPLITUDE_SUM_SLACK: f64 = 1e-9;

impl Spectrum {
    pub fn new(components: Vec<Component>) -> Result<Self, TimbreError> {
        let s = Self { components };
        s.validate()?;
        Ok(s)
    }

    /// Sorts by frequency, merges equal frequencies and scales the amplitudes
    /// to sum to one. Zero-amplitude components are dropped.
    pub fn normalized(components: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut comps: Vec<Component> = components
            .into_iter()
            .filter(|&(_, a)| a > 0.0)
            .map(Component::from)
            .collect();
        comps.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
        let mut merged: Vec<Component> = Vec::with_capacity(comps.len());
        for c in comps {
            match merged.last_mut() {
                Some(last) if last.frequency_hz == c.frequency_hz => last.amplitude += c.amplitude,
                _ => merged.push(c),
            }
        }
        let sum: f64 = merged.iter().map(|c| c.amplitude).sum();
        for c in &mut merged {
            c.amplitude /= sum;
        }
        Self { components: merged }
    }

    pub fn validate(&self) -> Result<(), TimbreError> {
        for c in &self.components {
            if !(c.frequency_hz.is_finite() && c.frequency_hz > 0.0) {
                return Err(TimbreError::InvalidSpectrum(format!(
                    "frequency {} must be positive",
                    c.frequency_hz
                )));
            }
            if !(c.amplitude.is_finite() && c.amplitude >= 0.0) {
                return Err(TimbreError::InvalidSpectrum(format!(
                    "amplitude {} must be non-negative",
                    c.amplitude
                )));
            }
        }
        if self
            .components
            .windows(2)
            .any(|w| w[0].frequency_hz >= w[1].frequency_hz)
        {
            return Err(TimbreError::InvalidSpectrum(
                "frequencies must be strictly increasing".into(),
            ));
        }
        if self.amplitude_sum() > 1.0 + AMPLITUDE_SUM_SLACK {
            return Err(TimbreError::InvalidSpectrum(format!(
                "amplitudes sum to {} > 1",
                self.amplitude_sum()
            )));
        }
        Ok(())
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn amplitude_sum(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimbreEvent {
    pub start: f64,
    pub duration: f64,
    #[serde(rename = "components")]
    pub spectrum: Spectrum,
}

/// Histogram bin `k` becomes harmonic `k + 1` of the fundamental, weighted by
/// its share of the counts in the first `max_partials` bins.
pub fn histogram_to_spectrum(
    hist: &Histogram,
    fundamental_hz: f64,
    max_partials: usize,
) -> Result<Spectrum, TimbreError> {
    if max_partials == 0 {
        return Err(TimbreError::InvalidArgument("max_partials must be >= 1".into()));
    }
    if !(fundamental_hz.is_finite() && fundamental_hz > 0.0) {
        return Err(TimbreError::InvalidArgument(format!(
            "fundamental_hz must be positive, got {fundamental_hz}"
        )));
    }
    let counts = &hist.counts()[..hist.bins().min(max_partials)];
    let sum: u64 = counts.iter().sum();
    if sum == 0 {
        return Err(TimbreError::EmptyHistogram);
    }
    let components = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| Component {
            frequency_hz: (k + 1) as f64 * fundamental_hz,
            amplitude: c as f64 / sum as f64,
        })
        .collect();
    Ok(Spectrum { components })
}

/// Ground selects group 0, Excited selects group 1.
pub fn select_group(outcome: Outcome, palette: &TimbrePalette) -> Result<&PartialGroup, TimbreError> {
    if palette.groups.len() < 2 {
        return Err(TimbreError::PaletteTooSmall(palette.groups.len()));
    }
    Ok(match outcome {
        Outcome::Ground => &palette.groups[0],
        Outcome::Excited => &palette.groups[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceMode {
    /// Each emission adds the next upper partial of group 0.
    #[default]
    CumulativeHarmonic,
    /// Each emission toggles between the spectra of groups 0 and 1.
    GroupSwitch,
}

/// Splits the record into contiguous segments at the scaled emission times.
/// The segment after the last emission lasts `total_hold` seconds.
pub fn build_event_sequence(
    record: &EmissionRecord,
    palette: &TimbrePalette,
    mode: SequenceMode,
    time_scale: f64,
    total_hold: f64,
) -> Result<Vec<TimbreEvent>, TimbreError> {
    palette.validate()?;
    if !(time_scale.is_finite() && time_scale > 0.0) {
        return Err(TimbreError::InvalidArgument(format!(
            "time_scale must be positive, got {time_scale}"
        )));
    }
    if !(total_hold.is_finite() && total_hold > 0.0) {
        return Err(TimbreError::InvalidArgument(format!(
            "total_hold must be positive, got {total_hold}"
        )));
    }
    let f0 = palette.fundamental_hz;
    let segment_spectrum: Box<dyn Fn(usize) -> Spectrum> = match mode {
        SequenceMode::CumulativeHarmonic => {
            let group = &palette.groups[0];
            let fundamental_amp = group
                .partials
                .iter()
                .find(|p| p.ratio == 1.0)
                .map_or(1.0, |p| p.amplitude);
            let upper: Vec<Partial> = group
                .partials
                .iter()
                .filter(|p| p.ratio != 1.0)
                .copied()
                .collect();
            Box::new(move |k| {
                let added = &upper[..k.min(upper.len())];
                Spectrum::normalized(
                    std::iter::once((f0, fundamental_amp))
                        .chain(added.iter().map(|p| (p.ratio * f0, p.amplitude))),
                )
            })
        }
        SequenceMode::GroupSwitch => {
            let spectra = [palette.groups[0].spectrum(f0), palette.groups[1].spectrum(f0)];
            Box::new(move |k| spectra[k % 2].clone())
        }
    };

    let mut events = Vec::with_capacity(record.len() + 1);
    let mut start = 0.0;
    let durations = record
        .intervals
        .iter()
        .map(|i| i * time_scale)
        .chain(std::iter::once(total_hold));
    for (k, duration) in durations.enumerate() {
        events.push(TimbreEvent {
            start,
            duration,
            spectrum: segment_spectrum(k),
        });
        start += duration;
    }
    validate_sequence(&events)?;
    Ok(events)
}

/// Plays a list of spectra one after another, each held `hold` seconds.
pub fn spectra_in_succession(spectra: Vec<Spectrum>, hold: f64) -> Result<Vec<TimbreEvent>, TimbreError> {
    if !(hold.is_finite() && hold > 0.0) {
        return Err(TimbreError::InvalidArgument(format!("hold must be positive, got {hold}")));
    }
    let events: Vec<TimbreEvent> = spectra
        .into_iter()
        .enumerate()
        .map(|(k, spectrum)| TimbreEvent {
            start: k as f64 * hold,
            duration: hold,
            spectrum,
        })
        .collect();
    validate_sequence(&events)?;
    Ok(events)
}

/// Checks that events start at zero and follow each other without gaps or
/// overlaps, and that every spectrum is valid.
pub fn validate_sequence(events: &[TimbreEvent]) -> Result<(), TimbreError> {
    let mut expected = 0.0f64;
    for (k, e) in events.iter().enumerate() {
        if !(e.duration.is_finite() && e.duration > 0.0) {
            return Err(TimbreError::InvalidSequence(format!(
                "event {k} has non-positive duration {}",
                e.duration
            )));
        }
        if (e.start - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(TimbreError::InvalidSequence(format!(
                "event {k} starts at {} but previous event ends at {expected}",
                e.start
            )));
        }
        e.spectrum.validate()?;
        expected = e.start + e.duration;
    }
    Ok(())
}

pub fn write_events_json(events: &[TimbreEvent], path: &Path) -> Result<(), TimbreError> {
    let json = serde_json::to_string_pretty(events).map_err(|e| TimbreError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, json + "\n").map_err(|e| TimbreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_events_json(path: &Path) -> Result<Vec<TimbreEvent>, TimbreError> {
    let text = fs::read_to_string(path).map_err(|e| TimbreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let events: Vec<TimbreEvent> = serde_json::from_str(&text).map_err(|e| TimbreError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    validate_sequence(&events)?;
    Ok(events)
}
