use serde::{Deserialize, Serialize};

use crate::corpus::CaptionRecord;
use crate::exec::{Exec, DEFAULT_CHUNK};
use crate::format::CaptionFormat;
use crate::providers::{ProviderError, VqaAnswer, VqaProvider};
use crate::richness::AssertionExtractor;

/// What to do when a provider call for a record fails after retries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Leave the record out of the score and list it under `failed`.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCapScore {
    pub id: String,
    pub assertions: u64,
    pub verified: u64,
    pub unparseable: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedRecord {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapScoreReport {
    pub format: CaptionFormat,
    /// 100 times verified assertions over all assertions.
    pub capscore: f64,
    /// No assertion was extracted and `capscore` is reported as 0.
    pub undefined: bool,
    pub assertions_total: u64,
    pub assertions_verified: u64,
    /// Answers that were neither yes nor no; they count as not verified.
    pub unparseable: u64,
    pub records_scored: u64,
    pub records_skipped: u64,
    pub failed: Vec<FailedRecord>,
    /// Per-record counts sorted by id, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_record: Option<Vec<RecordCapScore>>,
}

/// Assertions and verdicts for one caption.
pub fn capscore_record(
    record: &CaptionRecord,
    caption: &str,
    extractor: &dyn AssertionExtractor,
    vqa: &dyn VqaProvider,
) -> Result<RecordCapScore, ProviderError> {
    let assertions = extractor.extract(&record.id, caption)?;
    let mut out = RecordCapScore {
        id: record.id.clone(),
        assertions: assertions.len() as u64,
        verified: 0,
        unparseable: 0,
    };
    for a in &assertions {
        match vqa.verify(record, a)? {
            VqaAnswer::Yes => out.verified += 1,
            VqaAnswer::No => {}
            VqaAnswer::Unparseable => out.unparseable += 1,
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Tally {
    assertions: u64,
    verified: u64,
    unparseable: u64,
    scored: u64,
    skipped: u64,
    detail: Vec<RecordCapScore>,
    failed: Vec<(FailedRecord, ProviderError)>,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.assertions += o.assertions;
        self.verified += o.verified;
        self.unparseable += o.unparseable;
        self.scored += o.scored;
        self.skipped += o.skipped;
        self.detail.extend(o.detail);
        self.failed.extend(o.failed);
        self
    }
}

/// CapScore of the `format` captions: every caption is broken into atomic
/// assertions and each assertion is checked against the image by `vqa`.
pub fn capscore<I>(
    records: I,
    format: CaptionFormat,
    extractor: &dyn AssertionExtractor,
    vqa: &dyn VqaProvider,
    policy: FailurePolicy,
    keep_detail: bool,
    exec: Exec,
) -> Result<CapScoreReport, ProviderError>
where
    I: IntoIterator<Item = CaptionRecord>,
{
    let mut records = records.into_iter();
    let mut acc = Tally::default();
    loop {
        let chunk: Vec<CaptionRecord> = records.by_ref().take(DEFAULT_CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        let part = exec.map_reduce(
            &chunk,
            Tally::default,
            |r| {
                let mut t = Tally::default();
                let Some(caption) = r.text(format) else {
                    t.skipped = 1;
                    return t;
                };
                match capscore_record(r, caption, extractor, vqa) {
                    Ok(s) => {
                        t.scored = 1;
                        t.assertions = s.assertions;
                        t.verified = s.verified;
                        t.unparseable = s.unparseable;
                        if keep_detail {
                            t.detail.push(s);
                        }
                    }
                    Err(e) => t.failed.push((
                        FailedRecord {
                            id: r.id.clone(),
                            error: e.to_string(),
                        },
                        e,
                    )),
                }
                t
            },
            Tally::merge,
        );
        acc = acc.merge(part);
        if policy == FailurePolicy::Abort && !acc.failed.is_empty() {
            acc.failed.sort_by(|a, b| a.0.id.cmp(&b.0.id));
            return Err(acc.failed.swap_remove(0).1);
        }
    }
    acc.detail.sort_by(|a, b| a.id.cmp(&b.id));
    let mut failed: Vec<FailedRecord> = acc.failed.into_iter().map(|f| f.0).collect();
    failed.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(CapScoreReport {
        format,
        capscore: if acc.assertions == 0 {
            0.0
        } else {
            100.0 * acc.verified as f64 / acc.assertions as f64
        },
        undefined: acc.assertions == 0,
        assertions_total: acc.assertions,
        assertions_verified: acc.verified,
        unparseable: acc.unparseable,
        records_scored: acc.scored,
        records_skipped: acc.skipped,
        failed,
        per_record: keep_detail.then_some(acc.detail),
    })
}
