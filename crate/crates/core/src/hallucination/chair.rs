use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::vocab::ObjectVocabulary;
use crate::corpus::CaptionRecord;
use crate::exec::{Exec, DEFAULT_CHUNK};
use crate::format::CaptionFormat;
use crate::tokenize::split_sentences;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no record has both ground-truth objects and a `{format}` caption")]
pub struct NoScorableRecords {
    pub format: CaptionFormat,
}

/// CHAIR counts for one caption.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordChair {
    pub mentioned: u64,
    pub hallucinated: u64,
    pub sentences: u64,
    pub flagged_sentences: u64,
    pub hallucinated_objects: BTreeMap<String, u64>,
}

impl RecordChair {
    fn merge(mut self, o: RecordChair) -> RecordChair {
        self.mentioned += o.mentioned;
        self.hallucinated += o.hallucinated;
        self.sentences += o.sentences;
        self.flagged_sentences += o.flagged_sentences;
        for (k, v) in o.hallucinated_objects {
            *self.hallucinated_objects.entry(k).or_insert(0) += v;
        }
        self
    }
}

/// Score one caption against a set of ground-truth objects. Ground-truth
/// names are mapped through the vocabulary so synonyms there also count.
pub fn chair_caption(
    caption: &str,
    gt: &BTreeSet<String>,
    vocab: &ObjectVocabulary,
) -> RecordChair {
    let truth: BTreeSet<String> = gt
        .iter()
        .map(|o| match vocab.canonicalize(o) {
            Some(c) => c.to_string(),
            None => o.trim().to_lowercase(),
        })
        .collect();
    let sentences = split_sentences(caption).len() as u64;
    let mut out = RecordChair {
        sentences,
        ..Default::default()
    };
    let mut flagged = BTreeSet::new();
    for m in vocab.mentions(caption) {
        out.mentioned += 1;
        if !truth.contains(&m.object) {
            out.hallucinated += 1;
            flagged.insert(m.sentence);
            *out.hallucinated_objects.entry(m.object).or_insert(0) += 1;
        }
    }
    out.flagged_sentences = flagged.len() as u64;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChairReport {
    pub format: CaptionFormat,
    /// Hallucinated object instances over mentioned instances.
    pub chair_i: f64,
    /// Sentences with at least one hallucinated instance over all sentences.
    pub chair_s: f64,
    /// The denominator was zero and the score is reported as 0.
    pub chair_i_undefined: bool,
    pub chair_s_undefined: bool,
    pub mentioned_instances: u64,
    pub hallucinated_instances: u64,
    pub total_sentences: u64,
    pub flagged_sentences: u64,
    pub scored_records: u64,
    pub skipped_no_caption: u64,
    pub skipped_no_gt: u64,
    pub hallucinated_objects: BTreeMap<String, u64>,
}

#[derive(Default)]
struct Tally {
    counts: RecordChair,
    scored: u64,
    no_caption: u64,
    no_gt: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            counts: self.counts.merge(o.counts),
            scored: self.scored + o.scored,
            no_caption: self.no_caption + o.no_caption,
            no_gt: self.no_gt + o.no_gt,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// CHAIR_i and CHAIR_s of the `format` captions. Records without
/// `gt_objects` or without the caption are skipped and counted.
pub fn chair<I>(
    records: I,
    format: CaptionFormat,
    vocab: &ObjectVocabulary,
    exec: Exec,
) -> Result<ChairReport, NoScorableRecords>
where
    I: IntoIterator<Item = CaptionRecord>,
{
    let t = exec.fold_stream(
        records,
        DEFAULT_CHUNK,
        Tally::default,
        |r| match (r.text(format), &r.gt_objects) {
            (None, _) => Tally {
                no_caption: 1,
                ..Default::default()
            },
            (Some(_), None) => Tally {
                no_gt: 1,
                ..Default::default()
            },
            (Some(c), Some(gt)) => Tally {
                counts: chair_caption(c, gt, vocab),
                scored: 1,
                ..Default::default()
            },
        },
        Tally::merge,
    );
    if t.scored == 0 {
        return Err(NoScorableRecords { format });
    }
    let c = t.counts;
    Ok(ChairReport {
        format,
        chair_i: ratio(c.hallucinated, c.mentioned),
        chair_s: ratio(c.flagged_sentences, c.sentences),
        chair_i_undefined: c.mentioned == 0,
        chair_s_undefined: c.sentences == 0,
        mentioned_instances: c.mentioned,
        hallucinated_instances: c.hallucinated,
        total_sentences: c.sentences,
        flagged_sentences: c.flagged_sentences,
        scored_records: t.scored,
        skipped_no_caption: t.no_caption,
        skipped_no_gt: t.no_gt,
        hallucinated_objects: c.hallucinated_objects,
    })
}
