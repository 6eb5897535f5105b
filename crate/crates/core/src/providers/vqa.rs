use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::client::Client;
use super::templates::{render, PromptTemplates};
use super::wire::{ProviderRequest, VQA_PATH};
use super::ProviderError;
use crate::corpus::CaptionRecord;
use crate::format::content_words;
use crate::richness::Assertion;
use crate::tokenize::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VqaAnswer {
    Yes,
    No,
    Unparseable,
}

/// The first `yes`/`no` word of the lowercased, punctuation-stripped reply.
/// `yeah`/`yep` count as yes and `nope` as no.
pub fn parse_yes_no(reply: &str) -> VqaAnswer {
    let normalized: String = reply
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    for w in normalized.split_whitespace() {
        match w {
            "yes" | "yeah" | "yep" => return VqaAnswer::Yes,
            "no" | "nope" => return VqaAnswer::No,
            _ => {}
        }
    }
    VqaAnswer::Unparseable
}

pub fn vqa_ask(
    id: &str,
    image_ref: &str,
    question: &str,
    client: &Client,
) -> Result<VqaAnswer, ProviderError> {
    let req = ProviderRequest::new(id, image_ref, question);
    Ok(parse_yes_no(&client.call(VQA_PATH, &req)?.text))
}

/// Checks one assertion against the record's image.
pub trait VqaProvider: Send + Sync {
    fn verify(
        &self,
        record: &CaptionRecord,
        assertion: &Assertion,
    ) -> Result<VqaAnswer, ProviderError>;
}

pub struct RemoteVqa<'a> {
    pub client: &'a Client,
    pub template: String,
}

impl<'a> RemoteVqa<'a> {
    pub fn new(client: &'a Client, templates: &PromptTemplates) -> Self {
        RemoteVqa {
            client,
            template: templates.vqa.clone(),
        }
    }
}

impl VqaProvider for RemoteVqa<'_> {
    fn verify(
        &self,
        record: &CaptionRecord,
        assertion: &Assertion,
    ) -> Result<VqaAnswer, ProviderError> {
        let question = render(&self.template, &[("assertion", Some(&assertion.text))])?;
        let mut req = ProviderRequest::new(&record.id, &record.image_ref, question);
        req.input = Some(assertion.text.clone());
        Ok(parse_yes_no(&self.client.call(VQA_PATH, &req)?.text))
    }
}

/// Words a grounded mock accepts for a set of object names: every word of
/// every name, plus its `-s`/`-es` plural.
pub fn ground_words<'a>(objects: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for o in objects {
        for w in o.to_lowercase().split_whitespace() {
            out.insert(w.to_string());
            out.insert(format!("{w}s"));
            out.insert(format!("{w}es"));
        }
    }
    out
}

/// Yes iff every content word of `assertion` is a ground word.
pub fn grounded_answer(assertion: &str, ground: &BTreeSet<String>) -> VqaAnswer {
    let words = content_words(assertion, &Scheme::default());
    if !words.is_empty() && words.iter().all(|w| ground.contains(w)) {
        VqaAnswer::Yes
    } else {
        VqaAnswer::No
    }
}

/// Deterministic offline VQA that treats a record's `gt_objects` as the
/// image content. Records without ground truth answer no.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundedMockVqa;

impl VqaProvider for GroundedMockVqa {
    fn verify(
        &self,
        record: &CaptionRecord,
        assertion: &Assertion,
    ) -> Result<VqaAnswer, ProviderError> {
        let ground = record
            .gt_objects
            .as_ref()
            .map(ground_words)
            .unwrap_or_default();
        Ok(grounded_answer(&assertion.text, &ground))
    }
}
