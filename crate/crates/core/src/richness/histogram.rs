use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CaptionRecord;
use crate::exec::{Exec, DEFAULT_CHUNK};
use crate::format::CaptionFormat;
use crate::tokenize::{count_tokens, Scheme};

/// Upper edge of the open-ended overflow bin.
pub const OPEN_END: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistogramError {
    #[error("histogram needs at least one bin (two edges)")]
    NoBins,
    #[error("bin edges must be strictly ascending")]
    UnsortedEdges,
}

/// Left-inclusive bins `[edges[i], edges[i + 1])`.
///
/// `total` is the number of lengths that fell in a bin; lengths outside every
/// bin are tallied in `out_of_range` and records lacking the format in
/// `skipped`, so `total + out_of_range + skipped` equals records seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<u64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub out_of_range: u64,
    pub skipped: u64,
}

impl Histogram {
    pub fn new(bin_edges: Vec<u64>) -> Result<Self, HistogramError> {
        if bin_edges.len() < 2 {
            return Err(HistogramError::NoBins);
        }
        if bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HistogramError::UnsortedEdges);
        }
        Ok(Histogram {
            counts: vec![0; bin_edges.len() - 1],
            bin_edges,
            total: 0,
            out_of_range: 0,
            skipped: 0,
        })
    }

    /// Width-`width` bins from 0 up to `max`, plus an overflow bin `[max, inf)`.
    pub fn uniform_with_overflow(width: u64, max: u64) -> Result<Self, HistogramError> {
        let mut edges: Vec<u64> = (0..=max).step_by(width.max(1) as usize).collect();
        if edges.last() != Some(&max) {
            edges.push(max);
        }
        edges.push(OPEN_END);
        Histogram::new(edges)
    }

    /// Bins of width 5 over `[0, 200)` and an overflow bin.
    pub fn default_token_bins() -> Self {
        Self::uniform_with_overflow(5, 200).expect("valid default bins")
    }

    pub fn record(&mut self, value: u64) {
        // partition_point gives the first edge > value
        let i = self.bin_edges.partition_point(|&e| e <= value);
        if i == 0 || i == self.bin_edges.len() {
            self.out_of_range += 1;
        } else {
            self.counts[i - 1] += 1;
            self.total += 1;
        }
    }

    pub fn empty_like(&self) -> Self {
        Histogram::new(self.bin_edges.clone()).expect("edges already validated")
    }

    pub fn merge(mut self, other: Histogram) -> Histogram {
        debug_assert_eq!(self.bin_edges, other.bin_edges);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.out_of_range += other.out_of_range;
        self.skipped += other.skipped;
        self
    }

    pub fn seen(&self) -> u64 {
        self.total + self.out_of_range + self.skipped
    }

    /// Fraction of binned mass with `lo <= value <= hi`, for bins that lie
    /// fully inside that range.
    pub fn mass_within(&self, lo: u64, hi: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let inside: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                self.bin_edges[*i] >= lo && self.bin_edges[i + 1].saturating_sub(1) <= hi
            })
            .map(|(_, c)| c)
            .sum();
        inside as f64 / self.total as f64
    }

    /// `bin_start,bin_end,count` with `inf` for the open end.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let end = self.bin_edges[i + 1];
            let end = if end == OPEN_END {
                "inf".to_string()
            } else {
                end.to_string()
            };
            out.push_str(&format!("{},{},{}\n", self.bin_edges[i], end, c));
        }
        out
    }
}

/// Token lengths of every record's `format` caption, binned into a copy of
/// `bins`.
pub fn token_length_histogram<I>(
    records: I,
    format: CaptionFormat,
    bins: &Histogram,
    scheme: &Scheme,
    exec: Exec,
) -> Histogram
where
    I: IntoIterator<Item = CaptionRecord>,
{
    let empty = bins.empty_like();
    exec.fold_stream(
        records,
        DEFAULT_CHUNK,
        || empty.clone(),
        |r| {
            let mut h = empty.clone();
            match r.text(format) {
                Some(t) => h.record(count_tokens(t, scheme) as u64),
                None => h.skipped += 1,
            }
            h
        },
        Histogram::merge,
    )
}
