use std::collections::HashSet;

use crossbeam_channel::bounded;
use serde::{Deserialize, Serialize};

use super::client::Client;
use super::templates::{render, PromptTemplates};
use super::wire::{ProviderRequest, CAPTION_PATH};
use super::ProviderError;
use crate::corpus::CaptionRecord;
use crate::format::CaptionFormat;

/// A rendered captioning request for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRequest {
    pub id: String,
    pub image_ref: String,
    pub format: CaptionFormat,
    pub prompt: String,
    pub alt_text: Option<String>,
    pub ocr_text: Option<String>,
}

impl CaptionRequest {
    pub fn build(
        record: &CaptionRecord,
        format: CaptionFormat,
        templates: &PromptTemplates,
    ) -> Result<Self, ProviderError> {
        let alt = record.text(CaptionFormat::AltText);
        if format == CaptionFormat::Afc && alt.is_none() {
            return Err(ProviderError::MissingAltText(record.id.clone()));
        }
        let template = templates.caption.get(&format).ok_or_else(|| {
            ProviderError::Template(format!("no caption template for `{format}`"))
        })?;
        let prompt = render(
            template,
            &[("alt_text", alt), ("ocr_text", record.ocr_text.as_deref())],
        )?;
        Ok(CaptionRequest {
            id: record.id.clone(),
            image_ref: record.image_ref.clone(),
            format,
            prompt,
            alt_text: alt.map(String::from),
            ocr_text: record.ocr_text.clone(),
        })
    }

    pub fn to_wire(&self) -> ProviderRequest {
        let mut r = ProviderRequest::new(&self.id, &self.image_ref, &self.prompt);
        r.format = Some(self.format.key().to_string());
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecaptionOutcome {
    pub id: String,
    pub result: Result<String, ProviderError>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecaptionSummary {
    pub submitted: u64,
    pub succeeded: u64,
    pub failed: u64,
    /// Already present in the output, or repeated in the input.
    pub skipped_done: u64,
    pub missing_alt_text: u64,
    pub template_errors: u64,
}

/// Caption `records` in `format` with up to `max_in_flight` concurrent
/// requests.
///
/// Ids in `done` and ids seen earlier in this run are skipped. Outcomes are
/// handed to `sink` on the calling thread in completion order. Records that
/// cannot be rendered (AFC without alt text, template errors) are reported
/// through `sink` without contacting the provider.
pub fn recaption_batch<I, F>(
    records: I,
    format: CaptionFormat,
    client: &Client,
    templates: &PromptTemplates,
    done: &HashSet<String>,
    mut sink: F,
) -> RecaptionSummary
where
    I: IntoIterator<Item = CaptionRecord>,
    I::IntoIter: Send,
    F: FnMut(RecaptionOutcome),
{
    let workers = client.endpoint().max_in_flight.max(1);
    let (job_tx, job_rx) = bounded::<CaptionRequest>(workers * 2);
    let (out_tx, out_rx) = bounded::<RecaptionOutcome>(workers * 2);
    let mut summary = RecaptionSummary::default();
    let records = records.into_iter();

    std::thread::scope(|s| {
        for _ in 0..workers {
            let (rx, tx) = (job_rx.clone(), out_tx.clone());
            s.spawn(move || {
                for job in rx {
                    let result = client
                        .call(CAPTION_PATH, &job.to_wire())
                        .map(|r| r.text.trim().to_string());
                    if tx.send(RecaptionOutcome { id: job.id, result }).is_err() {
                        break;
                    }
                }
            });
        }
        drop(job_rx);

        let local_tx = out_tx.clone();
        let feeder = s.spawn(move || {
            let mut seen: HashSet<String> = HashSet::new();
            let mut tally = RecaptionSummary::default();
            for rec in records {
                if done.contains(&rec.id) || !seen.insert(rec.id.clone()) {
                    tally.skipped_done += 1;
                    continue;
                }
                match CaptionRequest::build(&rec, format, templates) {
                    Ok(req) => {
                        tally.submitted += 1;
                        if job_tx.send(req).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        match e {
                            ProviderError::MissingAltText(_) => tally.missing_alt_text += 1,
                            _ => tally.template_errors += 1,
                        }
                        let _ = local_tx.send(RecaptionOutcome {
                            id: rec.id,
                            result: Err(e),
                        });
                    }
                }
            }
            tally
        });
        drop(out_tx);

        for outcome in out_rx {
            match &outcome.result {
                Ok(_) => summary.succeeded += 1,
                Err(ProviderError::Failed { .. }) => summary.failed += 1,
                Err(_) => {}
            }
            sink(outcome);
        }
        let tally = feeder.join().expect("feeder thread");
        summary.submitted = tally.submitted;
        summary.skipped_done = tally.skipped_done;
        summary.missing_alt_text = tally.missing_alt_text;
        summary.template_errors = tally.template_errors;
    });
    summary
}
