//! Random reordering of labelled musical events.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::randsource::{RandomSource, SourceError};

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("sequence has {sequence} events but permutation has {permutation}")]
    LengthMismatch { sequence: usize, permutation: usize },
    #[error("duplicate event id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("not a permutation: {0}")]
    InvalidPermutation(String),
    #[error("cannot shuffle an empty sequence")]
    Empty,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundEvent {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<PathBuf>,
}

/// Ordered events with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventSequence {
    events: Vec<SoundEvent>,
}

impl EventSequence {
    pub fn new(events: Vec<SoundEvent>) -> Result<Self, SeqError> {
        let mut seen = HashSet::with_capacity(events.len());
        for e in &events {
            if !seen.insert(e.id.as_str()) {
                return Err(SeqError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[SoundEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.id.as_str())
    }
}

/// A bijection on `0..n`; `mapping[k]` is the source index placed at `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn new(mapping: Vec<usize>) -> Result<Self, SeqError> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(SeqError::InvalidPermutation(format!(
                    "{mapping:?} is not a bijection on 0..{n}"
                )));
            }
        }
        Ok(Self { mapping })
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

/// A permutation together with the number of units it consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shuffle {
    pub permutation: Permutation,
    pub draws: usize,
}

/// Fisher–Yates: for `i = n−1 … 1`, `j = ⌊u·(i+1)⌋`, swap `i` and `j`.
/// Consumes exactly `n − 1` units.
pub fn fisher_yates<S: RandomSource + ?Sized>(n: usize, source: &mut S) -> Result<Shuffle, SeqError> {
    if n == 0 {
        return Err(SeqError::Empty);
    }
    let mut mapping: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let u = source.next_unit()?;
        let j = ((u * (i + 1) as f64) as usize).min(i);
        mapping.swap(i, j);
    }
    Ok(Shuffle {
        permutation: Permutation { mapping },
        draws: n - 1,
    })
}

/// `output[k] = input[perm[k]]`.
pub fn apply_permutation(seq: &EventSequence, perm: &Permutation) -> Result<EventSequence, SeqError> {
    if seq.len() != perm.len() {
        return Err(SeqError::LengthMismatch {
            sequence: seq.len(),
            permutation: perm.len(),
        });
    }
    Ok(EventSequence {
        events: perm.mapping.iter().map(|&i| seq.events[i].clone()).collect(),
    })
}

/// Reads a JSON-lines file, one event object per non-blank line.
pub fn load_sequence(path: &Path) -> Result<EventSequence, SeqError> {
    let text = fs::read_to_string(path).map_err(|source| SeqError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: SoundEvent = serde_json::from_str(line).map_err(|e| SeqError::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(ev);
    }
    EventSequence::new(events)
}

pub fn save_sequence(seq: &EventSequence, path: &Path) -> Result<(), SeqError> {
    let mut buf = Vec::new();
    for e in &seq.events {
        serde_json::to_writer(&mut buf, e).expect("events serialize");
        buf.write_all(b"\n").expect("vec write");
    }
    fs::write(path, buf).map_err(|source| SeqError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randsource::{ScriptedSource, SeededGenerator};
    use proptest::prelude::*;

    fn seq(ids: &[&str]) -> EventSequence {
        EventSequence::new(
            ids.iter()
                .map(|id| SoundEvent {
                    id: id.to_string(),
                    label: format!("event {id}"),
                    payload_ref: None,
                })
                .collect(),
        )
        .unwrap()
    }

    /// Straight transcription of the swap loop over an explicit array.
    #[allow(clippy::manual_swap)]
    fn simulate_swaps(n: usize, units: &[f64]) -> Vec<usize> {
        let mut a: Vec<usize> = (0..n).collect();
        let mut k = 0;
        let mut i = n - 1;
        while i >= 1 {
            let j = (units[k] * (i + 1) as f64).floor() as usize;
            k += 1;
            let tmp = a[i];
            a[i] = a[j];
            a[j] = tmp;
            i -= 1;
        }
        a
    }

    #[test]
    fn single_element_is_identity() {
        let mut s = ScriptedSource::new([]).unwrap();
        let sh = fisher_yates(1, &mut s).unwrap();
        assert_eq!(sh.permutation, Permutation::identity(1));
        assert_eq!(sh.draws, 0);
    }

    #[test]
    fn fixed_point_draws_give_identity() {
        // i = 4, 3, 2, 1: u in [i/(i+1), 1)
        let mut s = ScriptedSource::new([0.8, 0.75, 0.9, 0.5]).unwrap();
        let sh = fisher_yates(5, &mut s).unwrap();
        assert_eq!(sh.permutation, Permutation::identity(5));
        assert_eq!(sh.draws, 4);
    }

    #[test]
    fn hand_traced_four() {
        let units = [0.0, 0.5, 0.99];
        let mut s = ScriptedSource::new(units).unwrap();
        let sh = fisher_yates(4, &mut s).unwrap();
        assert_eq!(sh.permutation.mapping(), &[3, 2, 1, 0]);
        assert_eq!(simulate_swaps(4, &units), vec![3, 2, 1, 0]);
    }

    #[test]
    fn exhaustion_propagates() {
        let mut s = ScriptedSource::new([0.1]).unwrap();
        assert!(matches!(fisher_yates(3, &mut s), Err(SeqError::Source(_))));
    }

    #[test]
    fn apply_examples() {
        let s = seq(&["A", "B"]);
        assert_eq!(apply_permutation(&s, &Permutation::identity(2)).unwrap(), s);
        let swapped = apply_permutation(&s, &Permutation::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(swapped.ids().collect::<Vec<_>>(), vec!["B", "A"]);
        assert!(matches!(
            apply_permutation(&s, &Permutation::identity(3)),
            Err(SeqError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn jsonl_round_trip_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.jsonl");
        let mut s = seq(&["e1", "e2", "e3"]);
        s.events[1].payload_ref = Some(PathBuf::from("clips/e2.wav"));
        save_sequence(&s, &path).unwrap();
        assert_eq!(load_sequence(&path).unwrap(), s);

        fs::write(&path, "{\"id\":\"a\",\"label\":\"x\"}\n{\"id\":\"a\",\"label\":\"y\"}\n").unwrap();
        assert!(matches!(load_sequence(&path), Err(SeqError::DuplicateId(id)) if id == "a"));

        fs::write(&path, "{\"id\":\"a\",\"label\":\"x\"}\nnot json\n").unwrap();
        assert!(matches!(load_sequence(&path), Err(SeqError::MalformedLine { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn always_a_bijection(n in 1usize..=100, seed in any::<u64>()) {
            let mut g = SeededGenerator::new(seed);
            let sh = fisher_yates(n, &mut g).unwrap();
            prop_assert!(Permutation::new(sh.permutation.mapping().to_vec()).is_ok());
            prop_assert_eq!(sh.draws, n - 1);
        }

        #[test]
        fn matches_swap_transcription(n in 2usize..30, seed in any::<u64>()) {
            let mut g = SeededGenerator::new(seed);
            let units: Vec<f64> = (0..n - 1).map(|_| g.next_f64()).collect();
            let mut s = ScriptedSource::new(units.clone()).unwrap();
            let sh = fisher_yates(n, &mut s).unwrap();
            prop_assert_eq!(sh.permutation.mapping(), &simulate_swaps(n, &units)[..]);
        }

        #[test]
        fn ids_preserved(n in 1usize..40, seed in any::<u64>()) {
            let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let s = seq(&refs);
            let sh = fisher_yates(n, &mut SeededGenerator::new(seed)).unwrap();
            let out = apply_permutation(&s, &sh.permutation).unwrap();
            let mut a: Vec<&str> = s.ids().collect();
            let mut b: Vec<&str> = out.ids().collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
