use serde::{Deserialize, Serialize};

use super::MixError;
use crate::corpus::CaptionRecord;
use crate::format::CaptionFormat;
use crate::hashing::unit_interval;
use crate::tokenize::{truncate_to_budget, Scheme, DEFAULT_SCHEME};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Per record, the primary source with probability `alt_ratio`, else the other.
    #[default]
    RatioSample,
    /// All sources joined in order by `separator`.
    Concat,
    /// One source per record, uniformly at random.
    UnionUniform,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    SkipRecord,
    #[default]
    FallbackOtherSource,
    Error,
}

/// How a corpus is turned into one training caption per image.
///
/// In `ratio_sample` mode `alt_ratio` is the probability of emitting the
/// primary source: alt text when it is one of the two sources, otherwise
/// the first listed source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixRecipe {
    pub mode: MixMode,
    pub alt_ratio: f64,
    pub sources: Vec<CaptionFormat>,
    pub seed: u64,
    pub missing_policy: MissingPolicy,
    pub separator: String,
    /// Truncate emitted text to this many tokens of `tokenizer`.
    pub budget: Option<usize>,
    pub tokenizer: String,
}

impl Default for MixRecipe {
    fn default() -> Self {
        MixRecipe {
            mode: MixMode::RatioSample,
            alt_ratio: 0.5,
            sources: vec![CaptionFormat::AltText, CaptionFormat::Ssc],
            seed: 0,
            missing_policy: MissingPolicy::FallbackOtherSource,
            separator: " ".into(),
            budget: None,
            tokenizer: DEFAULT_SCHEME.into(),
        }
    }
}

impl MixRecipe {
    pub fn ratio_sample(p: f64, sources: Vec<CaptionFormat>, seed: u64) -> Self {
        MixRecipe {
            alt_ratio: p,
            sources,
            seed,
            ..Default::default()
        }
    }

    pub fn concat(sources: Vec<CaptionFormat>) -> Self {
        MixRecipe {
            mode: MixMode::Concat,
            sources,
            ..Default::default()
        }
    }

    pub fn union_uniform(sources: Vec<CaptionFormat>, seed: u64) -> Self {
        MixRecipe {
            mode: MixMode::UnionUniform,
            sources,
            seed,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, MixError> {
        let r: MixRecipe =
            toml::from_str(text).map_err(|e| MixError::InvalidRecipe(e.to_string()))?;
        r.check()?;
        Ok(r)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("recipe serializes")
    }

    pub fn check(&self) -> Result<(), MixError> {
        let bad = |m: String| Err(MixError::InvalidRecipe(m));
        let n = self.sources.len();
        match self.mode {
            MixMode::RatioSample if n != 2 => {
                return bad(format!("ratio_sample needs exactly 2 sources, got {n}"))
            }
            MixMode::Concat if n < 2 => {
                return bad(format!("concat needs at least 2 sources, got {n}"))
            }
            MixMode::UnionUniform if n == 0 => return bad("union_uniform needs a source".into()),
            _ => {}
        }
        for (i, s) in self.sources.iter().enumerate() {
            if self.sources[..i].contains(s) {
                return bad(format!("source `{s}` listed twice"));
            }
        }
        if !(0.0..=1.0).contains(&self.alt_ratio) {
            return bad(format!("alt_ratio {} is outside [0, 1]", self.alt_ratio));
        }
        if self.budget == Some(0) {
            return bad("budget must be at least 1".into());
        }
        Scheme::by_name(&self.tokenizer).map_err(|e| MixError::InvalidRecipe(e.to_string()))?;
        Ok(())
    }

    /// (primary, other) for ratio sampling.
    pub fn ratio_pair(&self) -> (CaptionFormat, CaptionFormat) {
        let (a, b) = (self.sources[0], self.sources[1]);
        if b == CaptionFormat::AltText {
            (b, a)
        } else {
            (a, b)
        }
    }
}

/// Source chosen for `id` in ratio-sample mode: the primary source iff the
/// id's stable hash falls below `alt_ratio`.
pub fn assign_source(id: &str, recipe: &MixRecipe) -> CaptionFormat {
    let (primary, other) = recipe.ratio_pair();
    if unit_interval(recipe.seed, "mix", id) < recipe.alt_ratio {
        primary
    } else {
        other
    }
}

/// Longest whole-token prefix of at most `budget` tokens, and whether
/// anything was dropped.
pub fn truncate_for_budget<'a>(text: &'a str, budget: usize, scheme: &Scheme) -> (&'a str, bool) {
    truncate_to_budget(text, budget.max(1), scheme)
}

/// One emitted training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub id: String,
    pub image_ref: String,
    pub text: String,
    /// Source key, or keys joined by `+` for concatenations.
    pub source: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MixOutcome {
    Emit {
        pair: TrainingPair,
        fallback: bool,
    },
    /// No usable source under the missing-source policy.
    Skip,
}

/// A validated recipe ready to be applied record by record.
#[derive(Debug, Clone)]
pub struct Mixer {
    recipe: MixRecipe,
    scheme: Scheme,
}

impl Mixer {
    pub fn new(recipe: MixRecipe) -> Result<Self, MixError> {
        recipe.check()?;
        let scheme = Scheme::by_name(&recipe.tokenizer)
            .map_err(|e| MixError::InvalidRecipe(e.to_string()))?;
        Ok(Mixer { recipe, scheme })
    }

    pub fn recipe(&self) -> &MixRecipe {
        &self.recipe
    }

    fn missing(&self, r: &CaptionRecord, source: CaptionFormat) -> Result<MixOutcome, MixError> {
        match self.recipe.missing_policy {
            MissingPolicy::Error => Err(MixError::MissingSource {
                id: r.id.clone(),
                format: source,
            }),
            _ => Ok(MixOutcome::Skip),
        }
    }

    pub fn mix(&self, r: &CaptionRecord) -> Result<MixOutcome, MixError> {
        let recipe = &self.recipe;
        let fallback_ok = recipe.missing_policy == MissingPolicy::FallbackOtherSource;
        let (text, source, fallback) = match recipe.mode {
            MixMode::RatioSample => {
                let chosen = assign_source(&r.id, recipe);
                let (primary, other) = recipe.ratio_pair();
                let alternative = if chosen == primary { other } else { primary };
                match (r.text(chosen), r.text(alternative)) {
                    (Some(t), _) => (t.to_string(), chosen.key().to_string(), false),
                    (None, Some(t)) if fallback_ok => {
                        (t.to_string(), alternative.key().to_string(), true)
                    }
                    _ => return self.missing(r, chosen),
                }
            }
            MixMode::UnionUniform => {
                let u = unit_interval(recipe.seed, "union", &r.id);
                let pick = |pool: &[CaptionFormat]| {
                    pool[((u * pool.len() as f64) as usize).min(pool.len() - 1)]
                };
                let chosen = pick(&recipe.sources);
                match r.text(chosen) {
                    Some(t) => (t.to_string(), chosen.key().to_string(), false),
                    None if fallback_ok => {
                        let present: Vec<CaptionFormat> = recipe
                            .sources
                            .iter()
                            .copied()
                            .filter(|s| r.text(*s).is_some())
                            .collect();
                        if present.is_empty() {
                            return Ok(MixOutcome::Skip);
                        }
                        let s = pick(&present);
                        (
                            r.text(s).unwrap_or_default().to_string(),
                            s.key().to_string(),
                            true,
                        )
                    }
                    None => return self.missing(r, chosen),
                }
            }
            MixMode::Concat => {
                let mut parts = Vec::new();
                let mut keys = Vec::new();
                for &s in &recipe.sources {
                    match r.text(s) {
                        Some(t) => {
                            parts.push(t);
                            keys.push(s.key());
                        }
                        None if fallback_ok => {}
                        None => return self.missing(r, s),
                    }
                }
                if parts.is_empty() {
                    return Ok(MixOutcome::Skip);
                }
                let partial = parts.len() < recipe.sources.len();
                (parts.join(&recipe.separator), keys.join("+"), partial)
            }
        };
        let (text, truncated) = match recipe.budget {
            Some(b) => {
                let (t, cut) = truncate_for_budget(&text, b, &self.scheme);
                (t.to_string(), cut)
            }
            None => (text, false),
        };
        Ok(MixOutcome::Emit {
            pair: TrainingPair {
                id: r.id.clone(),
                image_ref: r.image_ref.clone(),
                text,
                source,
                truncated,
            },
            fallback,
        })
    }
}
