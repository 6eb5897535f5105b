use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::assertions::AssertionExtractor;
use crate::corpus::CaptionRecord;
use crate::exec::{Exec, DEFAULT_CHUNK};
use crate::format::CaptionFormat;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnaCell {
    pub captions: u64,
    pub assertions: u64,
    pub mean: f64,
}

impl AnaCell {
    fn finish(&mut self) {
        self.mean = if self.captions == 0 {
            0.0
        } else {
            self.assertions as f64 / self.captions as f64
        };
    }
}

/// Average number of assertions per caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnaReport {
    pub mean_assertions: f64,
    pub total_assertions: u64,
    pub total_captions: u64,
    /// No caption was scored; `mean_assertions` is 0 by convention.
    pub empty: bool,
    pub per_format: BTreeMap<CaptionFormat, AnaCell>,
    /// A provider call failed and scoring stopped early.
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Default)]
struct Tally {
    cells: BTreeMap<CaptionFormat, AnaCell>,
    failure: Option<String>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (f, c) in other.cells {
            let e = self.cells.entry(f).or_default();
            e.captions += c.captions;
            e.assertions += c.assertions;
        }
        self.failure = self.failure.or(other.failure);
        self
    }
}

/// ANA over the captions of `format`, or over every source when `None`.
pub fn ana<I>(
    records: I,
    format: Option<CaptionFormat>,
    extractor: &dyn AssertionExtractor,
    exec: Exec,
) -> AnaReport
where
    I: IntoIterator<Item = CaptionRecord>,
{
    let formats: Vec<CaptionFormat> = match format {
        Some(f) => vec![f],
        None => CaptionFormat::ALL.to_vec(),
    };
    let mut records = records.into_iter();
    let mut acc = Tally::default();
    // chunked so a provider failure stops the scan
    while acc.failure.is_none() {
        let chunk: Vec<CaptionRecord> = records.by_ref().take(DEFAULT_CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        let part = exec.map_reduce(
            &chunk,
            Tally::default,
            |r| {
                let mut t = Tally::default();
                for &f in &formats {
                    if let Some(text) = r.text(f) {
                        match extractor.extract(&r.id, text) {
                            Ok(a) => {
                                let c = t.cells.entry(f).or_default();
                                c.captions += 1;
                                c.assertions += a.len() as u64;
                            }
                            Err(e) => {
                                t.failure = Some(e.to_string());
                                break;
                            }
                        }
                    }
                }
                t
            },
            Tally::merge,
        );
        acc = acc.merge(part);
    }
    for f in &formats {
        acc.cells.entry(*f).or_default();
    }
    let mut per_format = acc.cells;
    let (mut captions, mut assertions) = (0, 0);
    for c in per_format.values_mut() {
        c.finish();
        captions += c.captions;
        assertions += c.assertions;
    }
    AnaReport {
        mean_assertions: if captions == 0 {
            0.0
        } else {
            assertions as f64 / captions as f64
        },
        total_assertions: assertions,
        total_captions: captions,
        empty: captions == 0,
        per_format,
        partial: acc.failure.is_some(),
        failure: acc.failure,
    }
}
