use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::format::{CaptionFormat, FormatError, Validator, Violation};
use crate::tokenize::{is_punct, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    /// Stripped case-insensitively from the start of a caption.
    pub boilerplate_prefixes: Vec<String>,
    /// Reject when 4-grams repeat more often than this (occurrences beyond
    /// the first, summed over all 4-grams).
    pub max_repeated_4grams: usize,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            boilerplate_prefixes: [
                "The image shows",
                "This image shows",
                "The photo shows",
                "The picture shows",
                "This is a photo of",
                "This is an image of",
                "This is a picture of",
                "In this image,",
                "In the image,",
            ]
            .map(String::from)
            .to_vec(),
            max_repeated_4grams: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    Empty,
    Format { violations: Vec<Violation> },
    Repetition { repeated_4grams: usize },
    Model { message: String },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Empty => f.write_str("empty"),
            RejectReason::Format { violations } => {
                let names: Vec<_> = violations.iter().map(Violation::name).collect();
                f.write_str(&names.join(","))
            }
            RejectReason::Repetition { repeated_4grams } => {
                write!(f, "repetition: {repeated_4grams} repeated 4-grams")
            }
            RejectReason::Model { message } => write!(f, "model: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityVerdict {
    Accept(String),
    Reject(RejectReason),
}

/// Model-based check run after the heuristics pass.
pub trait QualityHook: Send + Sync {
    fn check(&self, caption: &str, format: CaptionFormat) -> Result<(), String>;
}

fn strip_prefixes(mut s: &str, prefixes: &[String]) -> String {
    loop {
        let before = s;
        for p in prefixes {
            if s.len() >= p.len()
                && s.is_char_boundary(p.len())
                && s[..p.len()].eq_ignore_ascii_case(p)
            {
                s = s[p.len()..]
                    .trim_start_matches([' ', ',', ':', ';'])
                    .trim_start();
            }
        }
        if s == before {
            break;
        }
    }
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn repeated_4grams(text: &str, v: &Validator) -> usize {
    let words: Vec<String> = tokenize(text, &v.scheme)
        .tokens
        .into_iter()
        .filter(|t| !is_punct(t))
        .collect();
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    for g in words.windows(4) {
        *counts.entry(g).or_default() += 1;
    }
    counts.values().map(|c| c - 1).sum()
}

/// Heuristic clean-up and filtering of a freshly generated caption: strip
/// boilerplate openers, collapse whitespace, check the format contract,
/// reject degenerate repetition, then defer to `hook` if given.
pub fn quality_post_process(
    caption: &str,
    format: CaptionFormat,
    validator: &Validator,
    config: &QualityConfig,
    alt_text: Option<&str>,
    hook: Option<&dyn QualityHook>,
) -> QualityVerdict {
    let collapsed = caption.split_whitespace().collect::<Vec<_>>().join(" ");
    let cleaned = strip_prefixes(&collapsed, &config.boilerplate_prefixes);
    let report = match validator.validate(&cleaned, format, alt_text) {
        Err(FormatError::EmptyCaption) => return QualityVerdict::Reject(RejectReason::Empty),
        Err(e) => {
            return QualityVerdict::Reject(RejectReason::Model {
                message: e.to_string(),
            })
        }
        Ok(r) => r,
    };
    if !report.pass {
        return QualityVerdict::Reject(RejectReason::Format {
            violations: report.violations,
        });
    }
    let repeats = repeated_4grams(&cleaned, validator);
    if repeats > config.max_repeated_4grams {
        return QualityVerdict::Reject(RejectReason::Repetition {
            repeated_4grams: repeats,
        });
    }
    if let Some(h) = hook {
        if let Err(message) = h.check(&cleaned, format) {
            return QualityVerdict::Reject(RejectReason::Model { message });
        }
    }
    QualityVerdict::Accept(cleaned)
}
