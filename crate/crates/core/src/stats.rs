//! Interval histograms with convergence snapshots, and randomness-quality
//! measures (lag autocorrelation, longest exact repeat, permutation
//! uniformity).

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt_sig;

/// Default snapshot checkpoints for interval histograms.
pub const DEFAULT_CHECKPOINTS: [usize; 4] = [100, 1_000, 10_000, 100_000];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("histogram edges must be at least two strictly increasing finite values")]
    InvalidEdges,
    #[error("value {0} lies below the first histogram edge")]
    BelowRange(f64),
    #[error("value is not a number")]
    NotANumber,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histograms have different edges")]
    EdgeMismatch,
    #[error("checkpoint {checkpoint} exceeds the {available} available values")]
    CheckpointOutOfRange { checkpoint: usize, available: usize },
    #[error("checkpoints must be strictly increasing")]
    CheckpointsNotIncreasing,
    #[error("stream has zero variance at lag {lag}")]
    ZeroVariance { lag: usize },
    #[error("stream of length {len} is too short for lag {lag}")]
    TooShort { len: usize, lag: usize },
    #[error("lag must be positive")]
    InvalidLag,
    #[error("permutation tally over {0} elements is not supported (max 6)")]
    TooManyElements(usize),
    #[error("expected {expected} permutation counts, got {got}")]
    TallyLength { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(String),
}

impl From<io::Error> for StatsError {
    fn from(e: io::Error) -> Self {
        StatsError::Io(e.to_string())
    }
}

/// Binned counts over half-open bins `[e_i, e_{i+1})` plus an overflow bin
/// for values at or above the last edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    overflow: u64,
    total: u64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Result<Self, StatsError> {
        let valid = edges.len() >= 2
            && edges.iter().all(|e| e.is_finite())
            && edges.windows(2).all(|w| w[0] < w[1]);
        if !valid {
            return Err(StatsError::InvalidEdges);
        }
        let bins = edges.len() - 1;
        Ok(Self {
            edges,
            counts: vec![0; bins],
            overflow: 0,
            total: 0,
        })
    }

    /// `bins` equal-width bins on `[lo, hi)`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self, StatsError> {
        Self::new(uniform_edges(lo, hi, bins)?)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    /// Replaces the counts directly; `total` becomes `Σcounts + overflow`.
    pub fn with_counts(mut self, counts: Vec<u64>, overflow: u64) -> Result<Self, StatsError> {
        if counts.len() != self.counts.len() {
            return Err(StatsError::EdgeMismatch);
        }
        self.total = counts.iter().sum::<u64>() + overflow;
        self.counts = counts;
        self.overflow = overflow;
        Ok(self)
    }

    pub fn accumulate(&mut self, value: f64) -> Result<(), StatsError> {
        if value.is_nan() {
            return Err(StatsError::NotANumber);
        }
        if value < self.edges[0] {
            return Err(StatsError::BelowRange(value));
        }
        let upper = self.edges.partition_point(|e| *e <= value);
        if upper >= self.edges.len() {
            self.overflow += 1;
        } else {
            self.counts[upper - 1] += 1;
        }
        self.total += 1;
        Ok(())
    }

    /// Bin-wise sum of two histograms with identical edges.
    pub fn merge(&mut self, other: &Histogram) -> Result<(), StatsError> {
        if self.edges != other.edges {
            return Err(StatsError::EdgeMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.total += other.total;
        Ok(())
    }

    /// `counts_i / (total · width_i)`; integrates to the in-range fraction.
    pub fn normalized_density(&self) -> Result<Vec<f64>, StatsError> {
        if self.total == 0 {
            return Err(StatsError::EmptyHistogram);
        }
        let total = self.total as f64;
        Ok(self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 / (total * self.width(i)))
            .collect())
    }

    /// `Σ |density_i − f(midpoint_i)| · width_i`.
    pub fn l1_density_distance<F: Fn(f64) -> f64>(&self, density_fn: F) -> Result<f64, StatsError> {
        let density = self.normalized_density()?;
        Ok(density
            .iter()
            .enumerate()
            .map(|(i, d)| (d - density_fn(self.midpoint(i))).abs() * self.width(i))
            .sum())
    }

    /// `bin_lo,bin_hi,count,density` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,count,density")?;
        let density = self
            .normalized_density()
            .unwrap_or_else(|_| vec![0.0; self.bins()]);
        for (i, (&c, d)) in self.counts.iter().zip(density).enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_sig(self.edges[i], 12),
                fmt_sig(self.edges[i + 1], 12),
                c,
                fmt_sig(d, 12)
            )?;
        }
        Ok(())
    }
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>, StatsError> {
    if bins == 0 || lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(StatsError::InvalidEdges);
    }
    let width = (hi - lo) / bins as f64;
    Ok((0..=bins)
        .map(|i| if i == bins { hi } else { lo + i as f64 * width })
        .collect())
}

/// Histograms of growing prefixes of one interval stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSeries {
    pub checkpoints: Vec<usize>,
    pub snapshots: Vec<Histogram>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesManifest {
    edges: Vec<f64>,
    checkpoints: Vec<usize>,
    files: Vec<String>,
}

impl HistogramSeries {
    /// One `histogram_<n>.csv` per checkpoint plus `histograms.json` listing them.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<String>, StatsError> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.checkpoints.len());
        for (n, hist) in self.checkpoints.iter().zip(&self.snapshots) {
            let name = format!("histogram_{n}.csv");
            let mut buf = Vec::new();
            hist.write_csv(&mut buf)?;
            fs::write(dir.join(&name), buf)?;
            files.push(name);
        }
        let manifest = SeriesManifest {
            edges: self
                .snapshots
                .first()
                .map(|h| h.edges.clone())
                .unwrap_or_default(),
            checkpoints: self.checkpoints.clone(),
            files: files.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| StatsError::Io(e.to_string()))?;
        fs::write(dir.join("histograms.json"), json + "\n")?;
        files.push("histograms.json".to_string());
        Ok(files)
    }
}

/// Snapshot `k` is the histogram of the first `checkpoints[k]` intervals.
pub fn snapshot_series(
    intervals: &[f64],
    edges: &[f64],
    checkpoints: &[usize],
) -> Result<HistogramSeries, StatsError> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::CheckpointsNotIncreasing);
    }
    if let Some(&last) = checkpoints.last() {
        if last > intervals.len() {
            return Err(StatsError::CheckpointOutOfRange {
                checkpoint: last,
                available: intervals.len(),
            });
        }
    }
    let mut hist = Histogram::new(edges.to_vec())?;
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut consumed = 0;
    for &cp in checkpoints {
        for &v in &intervals[consumed..cp] {
            hist.accumulate(v)?;
        }
        consumed = cp;
        snapshots.push(hist.clone());
    }
    Ok(HistogramSeries {
        checkpoints: checkpoints.to_vec(),
        snapshots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub lag: usize,
    pub coefficient: f64,
    pub n: usize,
}

/// Pearson correlation of `(x_t, x_{t+lag})` pairs.
pub fn serial_correlation(stream: &[f64], lag: usize) -> Result<CorrelationReport, StatsError> {
    if lag == 0 {
        return Err(StatsError::InvalidLag);
    }
    if stream.len() < lag + 2 {
        return Err(StatsError::TooShort {
            len: stream.len(),
            lag,
        });
    }
    let m = stream.len() - lag;
    let (x, y) = (&stream[..m], &stream[lag..]);
    let mx = x.iter().sum::<f64>() / m as f64;
    let my = y.iter().sum::<f64>() / m as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance { lag });
    }
    let coefficient = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(CorrelationReport {
        lag,
        coefficient,
        n: m,
    })
}

/// Length of the longest contiguous run of symbols that occurs at two or
/// more (possibly overlapping) positions. Suffix array plus LCP.
pub fn longest_repeat<T: Ord>(stream: &[T]) -> usize {
    let n = stream.len();
    if n < 2 {
        return 0;
    }
    let sa = suffix_array(stream);
    let mut rank = vec![0usize; n];
    for (i, &s) in sa.iter().enumerate() {
        rank[s] = i;
    }
    // Kasai
    let mut best = 0;
    let mut h = 0usize;
    for i in 0..n {
        if rank[i] > 0 {
            let j = sa[rank[i] - 1];
            while i + h < n && j + h < n && stream[i + h] == stream[j + h] {
                h += 1;
            }
            best = best.max(h);
            h = h.saturating_sub(1);
        } else {
            h = 0;
        }
    }
    best
}

fn suffix_array<T: Ord>(s: &[T]) -> Vec<usize> {
    let n = s.len();
    let mut sa: Vec<usize> = (0..n).collect();
    sa.sort_by(|&a, &b| s[a].cmp(&s[b]));
    let mut rank = vec![0usize; n];
    for i in 1..n {
        rank[sa[i]] = rank[sa[i - 1]] + usize::from(s[sa[i - 1]] != s[sa[i]]);
    }
    let mut next = vec![0usize; n];
    let mut k = 1;
    while rank[sa[n - 1]] < n - 1 {
        let key = |i: usize| (rank[i], if i + k < n { rank[i + k] + 1 } else { 0 });
        sa.sort_unstable_by_key(|&i| key(i));
        next[sa[0]] = 0;
        for i in 1..n {
            next[sa[i]] = next[sa[i - 1]] + usize::from(key(sa[i - 1]) < key(sa[i]));
        }
        std::mem::swap(&mut rank, &mut next);
        k *= 2;
    }
    sa
}

/// Lexicographic index (Lehmer code) of a permutation of `0..n`.
pub fn permutation_rank(perm: &[usize]) -> usize {
    let n = perm.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller = perm[i + 1..].iter().filter(|&&p| p < perm[i]).count();
        rank = rank * (n - i) + smaller;
    }
    rank
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Pearson chi-square of a tally over all `n!` permutations against the
/// uniform expectation `total / n!`.
pub fn permutation_chi_square(n: usize, counts: &[u64]) -> Result<f64, StatsError> {
    if n > 6 {
        return Err(StatsError::TooManyElements(n));
    }
    let cells = factorial(n);
    if counts.len() != cells {
        return Err(StatsError::TallyLength {
            expected: cells,
            got: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let expected = total as f64 / cells as f64;
    Ok(counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randsource::SeededGenerator;
    use proptest::prelude::*;

    fn brute_longest_repeat<T: PartialEq>(s: &[T]) -> usize {
        let n = s.len();
        let mut best = 0;
        for i in 0..n {
            for j in i + 1..n {
                let mut l = 0;
                while j + l < n && s[i + l] == s[j + l] {
                    l += 1;
                }
                best = best.max(l);
            }
        }
        best
    }

    #[test]
    fn half_open_binning() {
        let mut h = Histogram::new(vec![0.0, 0.2, 0.4, 0.6]).unwrap();
        h.accumulate(0.4).unwrap();
        assert_eq!(h.counts(), &[0, 0, 1]);
        h.accumulate(0.6).unwrap();
        assert_eq!(h.overflow(), 1);
        assert_eq!(h.accumulate(-0.1), Err(StatsError::BelowRange(-0.1)));
        assert_eq!(h.total(), 2);
        h.accumulate(0.0).unwrap();
        assert_eq!(h.counts(), &[1, 0, 1]);
    }

    #[test]
    fn bad_edges_rejected() {
        assert!(Histogram::new(vec![0.0]).is_err());
        assert!(Histogram::new(vec![0.0, 0.0]).is_err());
        assert!(Histogram::new(vec![1.0, 0.0]).is_err());
        assert!(Histogram::uniform(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn series_examples() {
        let edges = [0.0, 0.2, 0.4];
        let s = snapshot_series(&[0.1, 0.3], &edges, &[1, 2]).unwrap();
        assert_eq!(s.snapshots[0].total(), 1);
        assert_eq!(s.snapshots[1].total(), 2);
        assert_eq!(
            snapshot_series(&[0.1, 0.3], &edges, &[3]),
            Err(StatsError::CheckpointOutOfRange {
                checkpoint: 3,
                available: 2
            })
        );
        assert_eq!(s, snapshot_series(&[0.1, 0.3], &edges, &[1, 2]).unwrap());
        assert!(snapshot_series(&[0.1, 0.3], &edges, &[2, 2]).is_err());
    }

    #[test]
    fn density_examples() {
        let h = Histogram::new(vec![0.0, 0.5, 1.0])
            .unwrap()
            .with_counts(vec![1, 1], 0)
            .unwrap();
        assert_eq!(h.normalized_density().unwrap(), vec![1.0, 1.0]);

        let empty = Histogram::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(empty.normalized_density(), Err(StatsError::EmptyHistogram));
        assert_eq!(empty.l1_density_distance(|_| 1.0), Err(StatsError::EmptyHistogram));

        let over = Histogram::uniform(0.0, 1.0, 4)
            .unwrap()
            .with_counts(vec![0; 4], 9)
            .unwrap();
        assert!(over.normalized_density().unwrap().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn l1_examples() {
        // f(x) = 2x on [0,1): midpoint masses for 4 bins of width 0.25
        let f = |x: f64| 2.0 * x;
        let h = Histogram::uniform(0.0, 1.0, 4).unwrap();
        let masses: Vec<u64> = (0..4).map(|i| (f(h.midpoint(i)) * 0.25 * 1600.0).round() as u64).collect();
        let h = h.with_counts(masses, 0).unwrap();
        assert!(h.l1_density_distance(f).unwrap().abs() < 1e-12);

        let h = Histogram::uniform(0.0, 1.0, 4)
            .unwrap()
            .with_counts(vec![3, 0, 2, 1], 4)
            .unwrap();
        assert!((h.l1_density_distance(|_| 0.0).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let h = Histogram::new(vec![0.0, 0.5, 1.0])
            .unwrap()
            .with_counts(vec![1, 1], 0)
            .unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "bin_lo,bin_hi,count,density");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0.00000000000e0,5.00000000000e-1,1,"));
    }

    #[test]
    fn merge_requires_equal_edges() {
        let mut a = Histogram::uniform(0.0, 1.0, 2).unwrap();
        let mut b = a.clone();
        a.accumulate(0.1).unwrap();
        b.accumulate(0.9).unwrap();
        b.accumulate(2.0).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.counts(), &[1, 1]);
        assert_eq!(a.total(), 3);
        let c = Histogram::uniform(0.0, 2.0, 2).unwrap();
        assert_eq!(a.merge(&c), Err(StatsError::EdgeMismatch));
    }

    #[test]
    fn correlation_examples() {
        let alt: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let r = serial_correlation(&alt, 1).unwrap();
        assert!((r.coefficient + 1.0).abs() < 1e-12);
        assert_eq!(r.n, 99);
        assert_eq!(
            serial_correlation(&[3.0; 10], 1),
            Err(StatsError::ZeroVariance { lag: 1 })
        );
        assert!(matches!(
            serial_correlation(&[1.0, 2.0], 1),
            Err(StatsError::TooShort { .. })
        ));
        assert_eq!(serial_correlation(&alt, 0), Err(StatsError::InvalidLag));
    }

    #[test]
    fn prng_stream_uncorrelated() {
        let mut g = SeededGenerator::new(0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| g.next_f64()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.002);
        assert!(serial_correlation(&xs, 1).unwrap().coefficient.abs() <= 0.01);
    }

    #[test]
    fn longest_repeat_examples() {
        assert_eq!(longest_repeat(&['a', 'b', 'c', 'a', 'b', 'c']), 3);
        assert_eq!(longest_repeat(&['a', 'b', 'c', 'd']), 0);
        assert_eq!(longest_repeat(&['a', 'a', 'a', 'a']), 3);
        assert_eq!(longest_repeat::<u8>(&[]), 0);
        assert_eq!(longest_repeat(&[7u8]), 0);
    }

    #[test]
    fn chi_square_examples() {
        assert_eq!(permutation_chi_square(3, &[5; 6]).unwrap(), 0.0);
        assert_eq!(permutation_chi_square(3, &[6, 0, 0, 0, 0, 0]).unwrap(), 30.0);
        assert_eq!(
            permutation_chi_square(7, &[1; 5040]),
            Err(StatsError::TooManyElements(7))
        );
        assert!(permutation_chi_square(3, &[1; 5]).is_err());
    }

    #[test]
    fn permutation_ranks_are_a_bijection() {
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for (i, p) in perms.iter().enumerate() {
            assert_eq!(permutation_rank(p), i);
        }
    }

    proptest! {
        #[test]
        fn total_is_counts_plus_overflow(values in proptest::collection::vec(0.0f64..2.0, 0..300)) {
            let mut h = Histogram::uniform(0.0, 1.0, 7).unwrap();
            for v in &values {
                h.accumulate(*v).unwrap();
            }
            prop_assert_eq!(h.total(), h.counts().iter().sum::<u64>() + h.overflow());
            prop_assert_eq!(h.total() as usize, values.len());
        }

        #[test]
        fn snapshots_match_rebuild(values in proptest::collection::vec(0.0f64..1.2, 1..200), cut in 0.0f64..1.0) {
            let edges = uniform_edges(0.0, 1.0, 5).unwrap();
            let mid = ((values.len() as f64 * cut) as usize).max(1);
            let cps: Vec<usize> = if mid < values.len() { vec![mid, values.len()] } else { vec![values.len()] };
            let series = snapshot_series(&values, &edges, &cps).unwrap();
            for (cp, snap) in series.checkpoints.iter().zip(&series.snapshots) {
                let mut fresh = Histogram::new(edges.clone()).unwrap();
                for v in &values[..*cp] {
                    fresh.accumulate(*v).unwrap();
                }
                prop_assert_eq!(&fresh, snap);
            }
        }

        #[test]
        fn correlation_affine_invariant(seed in any::<u64>(), a in 0.01f64..100.0, b in -50.0f64..50.0, lag in 1usize..5) {
            let mut g = SeededGenerator::new(seed);
            let xs: Vec<f64> = (0..500).map(|_| g.next_f64()).collect();
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let rx = serial_correlation(&xs, lag).unwrap().coefficient;
            let ry = serial_correlation(&ys, lag).unwrap().coefficient;
            prop_assert!((rx - ry).abs() < 1e-12);
        }

        #[test]
        fn longest_repeat_matches_brute_force(s in proptest::collection::vec(0u8..4, 0..200)) {
            prop_assert_eq!(longest_repeat(&s), brute_longest_repeat(&s));
        }
    }
}
