//! Simulation of a resonantly driven two-level atom with spontaneous emission,
//! and the mapping of its emission statistics onto harmonic spectra, timbre
//! event sequences and rendered audio.
//!
//! The crate is organised bottom-up:
//!
//! * [`randsource`] supplies uniform randomness (SplitMix64, raw quantum bytes, scripted units).
//! * [`qrngclient`] fetches quantum random bytes over HTTP and caches them.
//! * [`qjump`] holds the atomic physics: Rabi probability, hazard-renewal sampling
//!   and quantum-jump (Monte-Carlo wave-function) trajectories.
//! * [`stats`] accumulates interval histograms and measures randomness quality.
//! * [`timbre`] turns histograms and emission records into spectra and timbre events.
//! * [`synth`] renders events to PCM, reads and writes WAV, and computes sonograms.
//! * [`seqorder`] reorders labelled event sequences with a random source.
//! * [`cli`] wires everything into the `qtimbre` command line tool.

pub mod cli;
pub mod qjump;
pub mod qrngclient;
pub mod randsource;
pub mod seqorder;
pub mod stats;
pub mod synth;
pub mod timbre;

/// Formats `value` in scientific notation with `digits` significant digits.
pub(crate) fn fmt_sig(value: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), value)
}
