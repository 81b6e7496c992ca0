//! Uniform randomness suppliers.
//!
//! Every stochastic operation in the crate draws through [`RandomSource`], so a
//! run can be driven by a seeded pseudo-random generator, a file of quantum
//! random bytes, or a scripted list of units without any other change.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Odd increment of the SplitMix64 Weyl sequence.
pub const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const UNIT_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("SourceExhausted: no random data left after {consumed} draws")]
    SourceExhausted { consumed: u64 },
    #[error("scripted unit {0} is outside [0, 1)")]
    InvalidUnit(f64),
    #[error("failed to read byte source {path}: {message}")]
    Io { path: String, message: String },
}

/// A sequential supplier of uniform 64-bit words and unit reals.
pub trait RandomSource {
    fn next_word(&mut self) -> Result<u64, SourceError>;

    /// Uniform real in `[0, 1)` from the top 53 bits of the next word.
    fn next_unit(&mut self) -> Result<f64, SourceError> {
        self.next_word().map(word_to_unit)
    }

    /// Short provenance tag, e.g. `splitmix64:seed=42`.
    fn tag(&self) -> String;
}

impl<S: RandomSource + ?Sized> RandomSource for &mut S {
    fn next_word(&mut self) -> Result<u64, SourceError> {
        (**self).next_word()
    }

    fn next_unit(&mut self) -> Result<f64, SourceError> {
        (**self).next_unit()
    }

    fn tag(&self) -> String {
        (**self).tag()
    }
}

impl<S: RandomSource + ?Sized> RandomSource for Box<S> {
    fn next_word(&mut self) -> Result<u64, SourceError> {
        (**self).next_word()
    }

    fn next_unit(&mut self) -> Result<f64, SourceError> {
        (**self).next_unit()
    }

    fn tag(&self) -> String {
        (**self).tag()
    }
}

/// Maps a word to `[0, 1)` by keeping its top 53 bits.
#[inline]
pub fn word_to_unit(word: u64) -> f64 {
    (word >> 11) as f64 * UNIT_SCALE
}

/// One SplitMix64 step: returns `(new_state, output)`.
#[inline]
pub fn splitmix_next(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (state, z ^ (z >> 31))
}

/// SplitMix64 pseudo-random generator. Period 2^64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededGenerator {
    seed: u64,
    state: u64,
}

impl SeededGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let (state, out) = splitmix_next(self.state);
        self.state = state;
        out
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        word_to_unit(self.next_u64())
    }
}

impl RandomSource for SeededGenerator {
    #[inline]
    fn next_word(&mut self) -> Result<u64, SourceError> {
        Ok(self.next_u64())
    }

    fn tag(&self) -> String {
        format!("splitmix64:seed={}", self.seed)
    }
}

/// Consumes a finite byte buffer eight bytes per word, little-endian.
/// Bytes are never re-read once consumed.
#[derive(Clone, PartialEq, Eq)]
pub struct ByteStreamSource {
    bytes: Vec<u8>,
    cursor: usize,
    label: String,
}

impl fmt::Debug for ByteStreamSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ByteStreamSource")
            .field("len", &self.bytes.len())
            .field("cursor", &self.cursor)
            .field("label", &self.label)
            .finish()
    }
}

impl ByteStreamSource {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self::with_label(bytes, "memory")
    }

    pub fn with_label(bytes: Vec<u8>, label: impl Into<String>) -> Self {
        Self {
            bytes,
            cursor: 0,
            label: label.into(),
        }
    }

    /// Reads a raw, headerless byte file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SourceError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| SourceError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::with_label(bytes, path.display().to_string()))
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.cursor
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Assembles the next eight bytes into a little-endian word.
    pub fn bytes_to_word(&mut self) -> Result<u64, SourceError> {
        let end = self.cursor + 8;
        let Some(chunk) = self.bytes.get(self.cursor..end) else {
            return Err(SourceError::SourceExhausted {
                consumed: (self.cursor / 8) as u64,
            });
        };
        let word = u64::from_le_bytes(chunk.try_into().expect("eight-byte slice"));
        self.cursor = end;
        Ok(word)
    }
}

impl RandomSource for ByteStreamSource {
    fn next_word(&mut self) -> Result<u64, SourceError> {
        self.bytes_to_word()
    }

    fn tag(&self) -> String {
        format!("qbytes:{}", self.label)
    }
}

/// Emits a fixed list of units verbatim, then reports exhaustion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedSource {
    units: VecDeque<f64>,
    consumed: u64,
}

impl ScriptedSource {
    pub fn new(units: impl IntoIterator<Item = f64>) -> Result<Self, SourceError> {
        let units: VecDeque<f64> = units.into_iter().collect();
        if let Some(&bad) = units.iter().find(|u| !(0.0..1.0).contains(*u)) {
            return Err(SourceError::InvalidUnit(bad));
        }
        Ok(Self { units, consumed: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.units.len()
    }
}

impl RandomSource for ScriptedSource {
    /// The word whose top 53 bits reproduce the next scripted unit.
    fn next_word(&mut self) -> Result<u64, SourceError> {
        self.next_unit()
            .map(|u| ((u * (1u64 << 53) as f64) as u64) << 11)
    }

    fn next_unit(&mut self) -> Result<f64, SourceError> {
        match self.units.pop_front() {
            Some(u) => {
                self.consumed += 1;
                Ok(u)
            }
            None => Err(SourceError::SourceExhausted {
                consumed: self.consumed,
            }),
        }
    }

    fn tag(&self) -> String {
        "scripted".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splitmix_seed_zero() {
        let (s1, w1) = splitmix_next(0);
        assert_eq!(w1, 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix_next(0), (s1, w1));
        let (_, w2) = splitmix_next(s1);
        assert_eq!(w2, 0x6E78_9E6A_A1B9_65F4);
        assert_ne!(w1, w2);
    }

    #[test]
    fn unit_conversion_bounds() {
        assert_eq!(word_to_unit(0), 0.0);
        assert_eq!(
            word_to_unit(u64::MAX),
            ((1u64 << 53) - 1) as f64 / (1u64 << 53) as f64
        );
        assert!(word_to_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn byte_stream_little_endian() {
        let mut s = ByteStreamSource::new(vec![1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.bytes_to_word().unwrap(), 1);
        assert_eq!(s.cursor(), 8);

        let mut s = ByteStreamSource::new(vec![0, 0, 0, 0, 0, 0, 0, 0x80]);
        assert_eq!(s.bytes_to_word().unwrap(), 1u64 << 63);

        let mut s = ByteStreamSource::new(vec![0; 8]);
        assert_eq!(s.next_unit().unwrap(), 0.0);
    }

    #[test]
    fn byte_stream_short_tail_is_exhausted() {
        let mut s = ByteStreamSource::new(vec![0xAB; 7]);
        assert!(matches!(
            s.bytes_to_word(),
            Err(SourceError::SourceExhausted { consumed: 0 })
        ));
        assert_eq!(s.cursor(), 0);
    }

    #[test]
    fn scripted_emits_then_errors() {
        let mut s = ScriptedSource::new([0.25, 0.5]).unwrap();
        assert_eq!(s.next_unit().unwrap(), 0.25);
        assert_eq!(s.next_unit().unwrap(), 0.5);
        assert!(matches!(
            s.next_unit(),
            Err(SourceError::SourceExhausted { consumed: 2 })
        ));
        assert!(ScriptedSource::new([1.0]).is_err());
    }

    #[test]
    fn scripted_word_round_trips_unit() {
        let mut s = ScriptedSource::new([0.3931, 0.999_999]).unwrap();
        assert_eq!(word_to_unit(s.next_word().unwrap()), 0.3931);
        assert_eq!(word_to_unit(s.next_word().unwrap()), 0.999_999);
    }

    #[test]
    fn seeded_generators_agree() {
        let mut a = SeededGenerator::new(99);
        let mut b = SeededGenerator::new(99);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    proptest! {
        #[test]
        fn units_below_one_for_every_source(seed in any::<u64>(), bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let mut g = SeededGenerator::new(seed);
            for _ in 0..64 {
                let u = g.next_unit().unwrap();
                prop_assert!((0.0..1.0).contains(&u));
            }
            let n = bytes.len();
            let mut s = ByteStreamSource::new(bytes);
            let mut words = 0;
            while let Ok(u) = s.next_unit() {
                prop_assert!((0.0..1.0).contains(&u));
                words += 1;
            }
            prop_assert_eq!(words, n / 8);
        }

        #[test]
        fn max_word_unit_below_one(word in any::<u64>()) {
            prop_assert!(word_to_unit(word) < 1.0);
        }
    }
}
