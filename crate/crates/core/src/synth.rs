//! Additive rendering of timbre events, 16-bit mono WAV I/O and STFT
//! sonograms.

use std::f64::consts::TAU;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt_sig;
use crate::timbre::{validate_sequence, TimbreError, TimbreEvent};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no events to render")]
    EmptyEvents,
    #[error("crossfade {crossfade} s must be shorter than the shortest event ({shortest} s)")]
    CrossfadeTooLong { crossfade: f64, shortest: f64 },
    #[error("invalid synth settings: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Sequence(#[from] TimbreError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("buffer of {len} samples is shorter than the {window}-sample window")]
    BufferTooShort { len: usize, window: usize },
    #[error("window size {0} is not a power of two >= 2")]
    InvalidWindow(usize),
    #[error("hop {hop} must be in 1..={window}")]
    InvalidHop { hop: usize, window: usize },
    #[error("malformed sonogram CSV at line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Rendering settings. Output is always mono.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    /// Linear amplitude ramp length at segment boundaries, in seconds.
    #[serde(default = "default_crossfade")]
    pub crossfade: f64,
    #[serde(default = "default_gain")]
    pub master_gain: f64,
}

fn default_sample_rate() -> u32 {
    44_100
}

fn default_crossfade() -> f64 {
    0.01
}

fn default_gain() -> f64 {
    0.8
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sample_rate: default_sample_rate(),
            crossfade: default_crossfade(),
            master_gain: default_gain(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.sample_rate < 8000 {
            return Err(SynthError::InvalidSpec(format!(
                "sample_rate must be >= 8000, got {}",
                self.sample_rate
            )));
        }
        if !(self.crossfade.is_finite() && self.crossfade >= 0.0) {
            return Err(SynthError::InvalidSpec(format!(
                "crossfade must be >= 0, got {}",
                self.crossfade
            )));
        }
        if !(self.master_gain > 0.0 && self.master_gain <= 1.0) {
            return Err(SynthError::InvalidSpec(format!(
                "master_gain must be in (0, 1], got {}",
                self.master_gain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcmBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl PcmBuffer {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Phase of `frequency` at sample `n`, in `[0, 2π)`. Whole seconds are
/// split off first so long renders keep full phase precision.
#[inline]
fn phase(frequency: f64, n: usize, sample_rate: u32) -> f64 {
    let sr = sample_rate as usize;
    let whole = (frequency * (n / sr) as f64).fract();
    let part = frequency * (n % sr) as f64 / sample_rate as f64;
    TAU * (whole + part).fract()
}

/// Sums each event's sinusoids into one phase-continuous oscillator bank.
/// Each distinct frequency keeps a single running phase for the whole
/// render; amplitude changes at a segment boundary ramp linearly over the
/// crossfade window.
pub fn render_additive(events: &[TimbreEvent], spec: &SynthSpec) -> Result<PcmBuffer, SynthError> {
    spec.validate()?;
    if events.is_empty() {
        return Err(SynthError::EmptyEvents);
    }
    validate_sequence(events)?;
    let shortest = events.iter().map(|e| e.duration).fold(f64::INFINITY, f64::min);
    if spec.crossfade > 0.0 && spec.crossfade >= shortest {
        return Err(SynthError::CrossfadeTooLong {
            crossfade: spec.crossfade,
            shortest,
        });
    }

    let mut freqs: Vec<f64> = events
        .iter()
        .flat_map(|e| e.spectrum.components().iter().map(|c| c.frequency_hz))
        .collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup();
    let amps: Vec<Vec<f64>> = events
        .iter()
        .map(|e| {
            let mut a = vec![0.0; freqs.len()];
            for c in e.spectrum.components() {
                let idx = freqs.partition_point(|f| *f < c.frequency_hz);
                a[idx] = c.amplitude;
            }
            a
        })
        .collect();

    let sr = spec.sample_rate as f64;
    let last = events.last().expect("non-empty");
    let len = ((last.start + last.duration) * sr).round() as usize;
    let bounds: Vec<usize> = events.iter().map(|e| (e.start * sr).round() as usize).collect();
    let ramp = (spec.crossfade * sr).round() as usize;

    let mut samples = Vec::with_capacity(len);
    let mut current = vec![0.0; freqs.len()];
    let mut seg = 0;
    for n in 0..len {
        while seg + 1 < events.len() && n >= bounds[seg + 1] {
            seg += 1;
        }
        let into = n - bounds[seg];
        if seg > 0 && into < ramp {
            let w = into as f64 / ramp as f64;
            for ((c, a), b) in current.iter_mut().zip(&amps[seg - 1]).zip(&amps[seg]) {
                *c = a + (b - a) * w;
            }
        } else {
            current.copy_from_slice(&amps[seg]);
        }
        let mut x = 0.0;
        for (f, a) in freqs.iter().zip(&current) {
            if *a != 0.0 {
                x += a * phase(*f, n, spec.sample_rate).sin();
            }
        }
        samples.push((spec.master_gain * x).clamp(-1.0, 1.0));
    }
    Ok(PcmBuffer {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Encodes mono 16-bit PCM with a 44-byte RIFF header. Samples outside
/// `[-1, 1]` are clamped; the number clamped is returned alongside.
pub fn encode_wav(buffer: &PcmBuffer) -> (Vec<u8>, usize) {
    let data_len = buffer.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buffer.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    let mut clamped = 0;
    for &x in &buffer.samples {
        let y = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        if y != x {
            clamped += 1;
        }
        out.extend_from_slice(&((y * 32767.0).round() as i16).to_le_bytes());
    }
    (out, clamped)
}

pub fn decode_wav(bytes: &[u8]) -> Result<PcmBuffer, SynthError> {
    let bad = |m: &str| SynthError::MalformedWav(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE signature"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));

    let mut pos = 12;
    let mut sample_rate = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(bad("chunk extends past end of file"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let (format, channels, bits) = (u16_at(body), u16_at(body + 2), u16_at(body + 14));
                if format != 1 || channels != 1 || bits != 16 {
                    return Err(SynthError::MalformedWav(format!(
                        "unsupported format {format}, {channels} channels, {bits} bits"
                    )));
                }
                sample_rate = Some(u32_at(body + 4));
            }
            b"data" => {
                let rate = sample_rate.ok_or_else(|| bad("data chunk before fmt chunk"))?;
                if !size.is_multiple_of(2) {
                    return Err(bad("odd data length"));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| (i16::from_le_bytes([c[0], c[1]]) as f64 / 32767.0).max(-1.0))
                    .collect();
                return Ok(PcmBuffer {
                    samples,
                    sample_rate: rate,
                });
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(bad("no data chunk"))
}

/// Writes 16-bit mono PCM. Returns how many samples had to be clamped.
pub fn write_wav(buffer: &PcmBuffer, path: &Path) -> Result<usize, SynthError> {
    let (bytes, clamped) = encode_wav(buffer);
    fs::write(path, bytes).map_err(io_err(path))?;
    Ok(clamped)
}

pub fn read_wav(path: &Path) -> Result<PcmBuffer, SynthError> {
    decode_wav(&fs::read(path).map_err(io_err(path))?)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SonogramGrid {
    pub frame_times: Vec<f64>,
    pub bin_freqs: Vec<f64>,
    /// `magnitudes[frame][bin]`.
    pub magnitudes: Vec<Vec<f64>>,
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed magnitude spectra (bins `0..=window/2`) of frames starting
/// at `0, hop, 2·hop, …` while a full window fits.
pub fn stft(buffer: &PcmBuffer, window_size: usize, hop: usize) -> Result<SonogramGrid, SynthError> {
    if window_size < 2 || !window_size.is_power_of_two() {
        return Err(SynthError::InvalidWindow(window_size));
    }
    if hop == 0 || hop > window_size {
        return Err(SynthError::InvalidHop {
            hop,
            window: window_size,
        });
    }
    if buffer.samples.len() < window_size {
        return Err(SynthError::BufferTooShort {
            len: buffer.samples.len(),
            window: window_size,
        });
    }
    let sr = buffer.sample_rate as f64;
    let window = hann_window(window_size);
    let fft = FftPlanner::new().plan_fft_forward(window_size);
    let bins = window_size / 2 + 1;
    let mut grid = SonogramGrid {
        bin_freqs: (0..bins).map(|k| k as f64 * sr / window_size as f64).collect(),
        ..Default::default()
    };
    let mut frame = vec![Complex::new(0.0, 0.0); window_size];
    let mut offset = 0;
    while offset + window_size <= buffer.samples.len() {
        for ((slot, x), w) in frame
            .iter_mut()
            .zip(&buffer.samples[offset..offset + window_size])
            .zip(&window)
        {
            *slot = Complex::new(x * w, 0.0);
        }
        fft.process(&mut frame);
        grid.frame_times.push(offset as f64 / sr);
        grid.magnitudes.push(frame[..bins].iter().map(|c| c.norm()).collect());
        offset += hop;
    }
    Ok(grid)
}

/// Header `time_s,<bin freqs…>`, then one row per frame; 6 significant digits.
pub fn write_sonogram_csv<W: Write>(grid: &SonogramGrid, mut w: W) -> std::io::Result<()> {
    write!(w, "time_s")?;
    for f in &grid.bin_freqs {
        write!(w, ",{}", fmt_sig(*f, 6))?;
    }
    writeln!(w)?;
    for (t, row) in grid.frame_times.iter().zip(&grid.magnitudes) {
        write!(w, "{}", fmt_sig(*t, 6))?;
        for m in row {
            write!(w, ",{}", fmt_sig(*m, 6))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn export_sonogram_csv(grid: &SonogramGrid, path: &Path) -> Result<(), SynthError> {
    let mut buf = Vec::new();
    write_sonogram_csv(grid, &mut buf).map_err(io_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

pub fn import_sonogram_csv(path: &Path) -> Result<SonogramGrid, SynthError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let parse_row = |line: &str, n: usize| -> Result<Vec<f64>, SynthError> {
        line.split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| SynthError::MalformedCsv {
                    line: n,
                    message: format!("bad number {v:?}"),
                })
            })
            .collect()
    };
    let mut grid = SonogramGrid::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if i == 0 {
            let rest = line.strip_prefix("time_s").ok_or_else(|| SynthError::MalformedCsv {
                line: 1,
                message: "header must start with time_s".into(),
            })?;
            let rest = rest.strip_prefix(',').unwrap_or(rest);
            if !rest.is_empty() {
                grid.bin_freqs = parse_row(rest, 1)?;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row = parse_row(&line, i + 1)?;
        if row.len() != grid.bin_freqs.len() + 1 {
            return Err(SynthError::MalformedCsv {
                line: i + 1,
                message: format!("expected {} fields", grid.bin_freqs.len() + 1),
            });
        }
        grid.frame_times.push(row[0]);
        grid.magnitudes.push(row[1..].to_vec());
    }
    Ok(grid)
}
