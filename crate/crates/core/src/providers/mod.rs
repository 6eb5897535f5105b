//! Clients for external model services and their offline stand-ins.
//!
//! Every provider speaks JSON over HTTP: a POST of [`ProviderRequest`]
//! (`{id, image_ref, prompt}` plus optional fields) to `/caption`, `/assert`
//! or `/vqa`, answered with [`ProviderResponse`] (`{id, text}`). The
//! [`Client`] adds bounded concurrency, rate limiting and exponential backoff
//! with jitter on top of any [`Transport`].

mod client;
mod endpoint;
mod mock;
mod quality;
mod recaption;
mod templates;
mod vqa;
mod wire;

use std::collections::BTreeSet;

use thiserror::Error;

pub use client::{
    backoff_delay, is_retryable_status, AttemptError, Client, ClientStats, HttpTransport,
    InFlightLedger, RateLimiter, Transport,
};
pub use endpoint::ProviderEndpoint;
pub use mock::{MockCore, MockServer, TranscriptEntry};
pub use quality::{quality_post_process, QualityConfig, QualityHook, QualityVerdict, RejectReason};
pub use recaption::{recaption_batch, CaptionRequest, RecaptionOutcome, RecaptionSummary};
pub use templates::{render, PromptTemplates, ASSERTION_PROMPT, VQA_PROMPT};
pub use vqa::{
    ground_words, grounded_answer, parse_yes_no, vqa_ask, GroundedMockVqa, RemoteVqa, VqaAnswer,
    VqaProvider,
};
pub use wire::{ProviderRequest, ProviderResponse, ASSERT_PATH, CAPTION_PATH, VQA_PATH};

use crate::richness::{normalize_entity, Assertion, AssertionExtractor, EntityExtractor};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider request `{id}` failed after {attempts} attempt(s): {message}")]
    Failed {
        id: String,
        attempts: u32,
        message: String,
    },
    #[error("template error: {0}")]
    Template(String),
    #[error("record `{0}` has no alt text, which afc captions require")]
    MissingAltText(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// Split a provider's list reply into items: one per line, list markers
/// (`-`, `*`, `1.`, `2)`) removed, blanks dropped, first occurrence kept.
pub fn parse_list_reply(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    text.lines()
        .map(|l| {
            let l = l
                .trim()
                .trim_start_matches(['-', '*', '\u{2022}'])
                .trim_start();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            let l = if digits > 0 && l[digits..].starts_with(['.', ')']) {
                l[digits + 1..].trim_start()
            } else {
                l
            };
            l.trim().to_string()
        })
        .filter(|l| !l.is_empty() && seen.insert(l.clone()))
        .collect()
}

/// Assertion extraction delegated to an LLM behind `/assert`.
pub struct RemoteAssertions<'a> {
    pub client: &'a Client,
    pub template: String,
}

impl<'a> RemoteAssertions<'a> {
    pub fn new(client: &'a Client, templates: &PromptTemplates) -> Self {
        RemoteAssertions {
            client,
            template: templates.assertion.clone(),
        }
    }
}

impl AssertionExtractor for RemoteAssertions<'_> {
    fn extract(&self, caption_id: &str, caption: &str) -> Result<Vec<Assertion>, ProviderError> {
        if caption.trim().is_empty() {
            return Ok(Vec::new());
        }
        let prompt = render(&self.template, &[("caption", Some(caption))])?;
        let mut req = ProviderRequest::new(caption_id, "", prompt);
        req.input = Some(caption.to_string());
        let resp = self.client.call(ASSERT_PATH, &req)?;
        Ok(parse_list_reply(&resp.text)
            .into_iter()
            .map(|text| Assertion {
                text,
                source_caption_id: caption_id.to_string(),
            })
            .collect())
    }
}

pub const ENTITY_PROMPT: &str =
    "List the named entities (people, places, brands, titles, numbers) in the text, one per line.\n\nText: {caption}";

/// Entity extraction delegated to an LLM/NER service behind `/assert`.
pub struct RemoteEntities<'a> {
    pub client: &'a Client,
    pub template: String,
}

impl EntityExtractor for RemoteEntities<'_> {
    fn extract(&self, text: &str) -> Result<BTreeSet<String>, ProviderError> {
        let prompt = render(&self.template, &[("caption", Some(text))])?;
        let mut req = ProviderRequest::new("entities", "", prompt);
        req.input = Some(text.to_string());
        let resp = self.client.call(ASSERT_PATH, &req)?;
        Ok(parse_list_reply(&resp.text)
            .iter()
            .map(|e| normalize_entity(e))
            .filter(|e| !e.is_empty())
            .collect())
    }
}
