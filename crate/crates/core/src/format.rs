//! Caption formats and their machine-checkable contracts.
//!
//! | format    | sentences | tokens    | extra                            |
//! |-----------|-----------|-----------|----------------------------------|
//! | `alt`     | -         | -         | raw web text, unconstrained      |
//! | `ssc`     | 1         | 5..=25    |                                  |
//! | `dsc`     | -         | 30..=78   |                                  |
//! | `dscplus` | -         | >= 79     |                                  |
//! | `afc`     | -         | 30..=78   | shares a content word with alt   |
//!
//! Token bands are counted in the active tokenizer scheme and are inclusive.
//! Only the 78-token DSC ceiling and the single-sentence SSC rule are fixed
//! by the format definitions; the other band edges are defaults and can be
//! overridden from a TOML table per format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon;
use crate::tokenize::{count_tokens, is_punct, split_sentences, tokenize, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaptionFormat {
    #[serde(rename = "alt")]
    AltText,
    #[serde(rename = "ssc")]
    Ssc,
    #[serde(rename = "dsc")]
    Dsc,
    #[serde(rename = "dscplus")]
    DscPlus,
    #[serde(rename = "afc")]
    Afc,
}

impl CaptionFormat {
    pub const ALL: [CaptionFormat; 5] = [
        CaptionFormat::AltText,
        CaptionFormat::Ssc,
        CaptionFormat::Dsc,
        CaptionFormat::DscPlus,
        CaptionFormat::Afc,
    ];

    pub const SYNTHETIC: [CaptionFormat; 4] = [
        CaptionFormat::Ssc,
        CaptionFormat::Dsc,
        CaptionFormat::DscPlus,
        CaptionFormat::Afc,
    ];

    pub fn key(self) -> &'static str {
        match self {
            CaptionFormat::AltText => "alt",
            CaptionFormat::Ssc => "ssc",
            CaptionFormat::Dsc => "dsc",
            CaptionFormat::DscPlus => "dscplus",
            CaptionFormat::Afc => "afc",
        }
    }

    pub fn is_synthetic(self) -> bool {
        self != CaptionFormat::AltText
    }

    /// Parse a comma-separated list such as `alt,ssc`.
    pub fn parse_list(s: &str) -> Result<Vec<CaptionFormat>, FormatError> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for CaptionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for CaptionFormat {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "alt" | "alttext" => Ok(CaptionFormat::AltText),
            "ssc" => Ok(CaptionFormat::Ssc),
            "dsc" => Ok(CaptionFormat::Dsc),
            "dscplus" | "dsc+" => Ok(CaptionFormat::DscPlus),
            "afc" => Ok(CaptionFormat::Afc),
            _ => Err(FormatError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("unknown caption format `{0}`")]
    UnknownFormat(String),
    #[error("caption is empty")]
    EmptyCaption,
    #[error("invalid spec for {format}: min_tokens {min} > max_tokens {max}")]
    InvertedBand {
        format: CaptionFormat,
        min: usize,
        max: usize,
    },
    #[error("spec table: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub format: CaptionFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sentences: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<usize>,
    #[serde(default)]
    pub requires_alt_fusion: bool,
}

impl FormatSpec {
    pub fn unconstrained(format: CaptionFormat) -> Self {
        FormatSpec {
            format,
            max_sentences: None,
            min_tokens: None,
            max_tokens: None,
            requires_alt_fusion: false,
        }
    }

    fn check(&self) -> Result<(), FormatError> {
        match (self.min_tokens, self.max_tokens) {
            (Some(min), Some(max)) if min > max => Err(FormatError::InvertedBand {
                format: self.format,
                min,
                max,
            }),
            _ => Ok(()),
        }
    }
}

/// Partial override of one format's spec, as read from a config table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecOverride {
    pub max_sentences: Option<usize>,
    pub min_tokens: Option<usize>,
    pub max_tokens: Option<usize>,
    pub requires_alt_fusion: Option<bool>,
}

/// Registry holding exactly one spec per [`CaptionFormat`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatSpecs {
    specs: BTreeMap<CaptionFormat, FormatSpec>,
}

impl Default for FormatSpecs {
    fn default() -> Self {
        default_specs()
    }
}

pub fn default_specs() -> FormatSpecs {
    let dsc_band = |format| FormatSpec {
        format,
        max_sentences: None,
        min_tokens: Some(30),
        max_tokens: Some(78),
        requires_alt_fusion: false,
    };
    let specs = [
        FormatSpec::unconstrained(CaptionFormat::AltText),
        FormatSpec {
            format: CaptionFormat::Ssc,
            max_sentences: Some(1),
            min_tokens: Some(5),
            max_tokens: Some(25),
            requires_alt_fusion: false,
        },
        dsc_band(CaptionFormat::Dsc),
        FormatSpec {
            format: CaptionFormat::DscPlus,
            max_sentences: None,
            min_tokens: Some(79),
            max_tokens: None,
            requires_alt_fusion: false,
        },
        FormatSpec {
            requires_alt_fusion: true,
            ..dsc_band(CaptionFormat::Afc)
        },
    ];
    FormatSpecs {
        specs: specs.into_iter().map(|s| (s.format, s)).collect(),
    }
}

impl FormatSpecs {
    pub fn get(&self, format: CaptionFormat) -> &FormatSpec {
        &self.specs[&format]
    }

    pub fn iter(&self) -> impl Iterator<Item = &FormatSpec> {
        self.specs.values()
    }

    pub fn apply(&mut self, format: CaptionFormat, ov: &SpecOverride) -> Result<(), FormatError> {
        let mut spec = self.specs[&format].clone();
        if let Some(v) = ov.max_sentences {
            spec.max_sentences = Some(v);
        }
        if let Some(v) = ov.min_tokens {
            spec.min_tokens = Some(v);
        }
        if let Some(v) = ov.max_tokens {
            spec.max_tokens = Some(v);
        }
        if let Some(v) = ov.requires_alt_fusion {
            spec.requires_alt_fusion = v;
        }
        spec.check()?;
        self.specs.insert(format, spec);
        Ok(())
    }

    pub fn with_overrides(
        mut self,
        overrides: &BTreeMap<CaptionFormat, SpecOverride>,
    ) -> Result<Self, FormatError> {
        for (f, ov) in overrides {
            self.apply(*f, ov)?;
        }
        Ok(self)
    }

    /// Defaults with the overrides of a TOML document keyed by format name,
    /// e.g. `[ssc]\nmax_tokens = 30`.
    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        let overrides: BTreeMap<CaptionFormat, SpecOverride> =
            toml::from_str(text).map_err(|e| FormatError::Config(e.to_string()))?;
        default_specs().with_overrides(&overrides)
    }

    pub fn to_toml(&self) -> String {
        let table: BTreeMap<CaptionFormat, SpecOverride> = self
            .specs
            .values()
            .map(|s| {
                (
                    s.format,
                    SpecOverride {
                        max_sentences: s.max_sentences,
                        min_tokens: s.min_tokens,
                        max_tokens: s.max_tokens,
                        requires_alt_fusion: Some(s.requires_alt_fusion),
                    },
                )
            })
            .collect();
        toml::to_string(&table).expect("spec table serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    MaxSentences { measured: usize, limit: usize },
    MinTokens { measured: usize, limit: usize },
    MaxTokens { measured: usize, limit: usize },
    AltFusion { shared_content_words: usize },
}

impl Violation {
    pub fn name(&self) -> &'static str {
        match self {
            Violation::MaxSentences { .. } => "max_sentences",
            Violation::MinTokens { .. } => "min_tokens",
            Violation::MaxTokens { .. } => "max_tokens",
            Violation::AltFusion { .. } => "alt_fusion",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MaxSentences { measured, limit } => {
                write!(f, "max_sentences: measured {measured} > {limit}")
            }
            Violation::MinTokens { measured, limit } => {
                write!(f, "min_tokens: measured {measured} < {limit}")
            }
            Violation::MaxTokens { measured, limit } => {
                write!(f, "max_tokens: measured {measured} > {limit}")
            }
            Violation::AltFusion { .. } => {
                write!(f, "alt_fusion: no content word shared with alt text")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub format: CaptionFormat,
    pub pass: bool,
    pub tokens: usize,
    pub sentences: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Format(CaptionFormat),
    Unclassifiable,
}

/// Lowercased non-punctuation tokens that are not stopwords.
pub fn content_words(text: &str, scheme: &Scheme) -> BTreeSet<String> {
    tokenize(text, scheme)
        .tokens
        .into_iter()
        .map(|t| t.to_lowercase())
        .filter(|t| !is_punct(t) && !lexicon::is_stopword(t))
        .collect()
}

/// Specs bound to a tokenizer scheme.
#[derive(Debug, Clone, Default)]
pub struct Validator {
    pub specs: FormatSpecs,
    pub scheme: Scheme,
}

/// Classification candidates, most constrained first.
const CLASSIFY_ORDER: [CaptionFormat; 3] = [
    CaptionFormat::Ssc,
    CaptionFormat::Dsc,
    CaptionFormat::DscPlus,
];

impl Validator {
    pub fn new(specs: FormatSpecs, scheme: Scheme) -> Self {
        Validator { specs, scheme }
    }

    /// Check `caption` against `format`'s spec. The alt-fusion rule is only
    /// evaluated when `alt_text` is given.
    pub fn validate(
        &self,
        caption: &str,
        format: CaptionFormat,
        alt_text: Option<&str>,
    ) -> Result<ValidationReport, FormatError> {
        if caption.trim().is_empty() {
            return Err(FormatError::EmptyCaption);
        }
        let spec = self.specs.get(format);
        let tokens = count_tokens(caption, &self.scheme);
        let sentences = split_sentences(caption).len();
        let mut violations = Vec::new();
        if let Some(limit) = spec.max_sentences {
            if sentences > limit {
                violations.push(Violation::MaxSentences {
                    measured: sentences,
                    limit,
                });
            }
        }
        if let Some(limit) = spec.min_tokens {
            if tokens < limit {
                violations.push(Violation::MinTokens {
                    measured: tokens,
                    limit,
                });
            }
        }
        if let Some(limit) = spec.max_tokens {
            if tokens > limit {
                violations.push(Violation::MaxTokens {
                    measured: tokens,
                    limit,
                });
            }
        }
        if spec.requires_alt_fusion {
            if let Some(alt) = alt_text {
                let alt_words = content_words(alt, &self.scheme);
                let shared = content_words(caption, &self.scheme)
                    .intersection(&alt_words)
                    .count();
                if shared == 0 {
                    violations.push(Violation::AltFusion {
                        shared_content_words: 0,
                    });
                }
            }
        }
        Ok(ValidationReport {
            format,
            pass: violations.is_empty(),
            tokens,
            sentences,
            violations,
        })
    }

    /// The most constrained of SSC, DSC and DSC+ whose spec the caption
    /// satisfies. AFC is never returned: without alt text it is
    /// indistinguishable from DSC.
    pub fn classify(&self, caption: &str) -> Result<Classification, FormatError> {
        for f in CLASSIFY_ORDER {
            if self.validate(caption, f, None)?.pass {
                return Ok(Classification::Format(f));
            }
        }
        Ok(Classification::Unclassifiable)
    }
}
