use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::lexicon;
use crate::providers::ProviderError;
use crate::tokenize::{split_sentences, Scheme};

/// One atomic factual claim taken from a caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub text: String,
    pub source_caption_id: String,
}

pub trait AssertionExtractor: Send + Sync {
    fn extract(&self, caption_id: &str, caption: &str) -> Result<Vec<Assertion>, ProviderError>;
}

/// Offline clause splitter.
///
/// Each sentence is cut at commas and at the word `and`; adjacent pieces are
/// kept apart only when both look like finite clauses, otherwise they are
/// glued back together. A piece is finite when it contains an auxiliary or
/// copula (`is`, `are`, `has`, `can`, ...) or a word ending in `-s`/`-ed`
/// that does not directly follow a determiner or numeral (`a man stands`,
/// but not `two cats`).
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedAssertions;

fn looks_finite(words: &[String]) -> bool {
    if words.iter().any(|w| lexicon::is_auxiliary(w)) {
        return true;
    }
    words.windows(2).any(|w| {
        let (prev, cur) = (&w[0], &w[1]);
        let verb_suffix = cur.len() > 3
            && ((cur.ends_with('s') && !cur.ends_with("ss") && !cur.ends_with("us"))
                || cur.ends_with("ed"));
        verb_suffix && !lexicon::is_determiner(prev) && !lexicon::is_stopword(prev)
    })
}

impl RuleBasedAssertions {
    /// Byte ranges of the clauses of `caption`.
    pub fn clauses(caption: &str) -> Vec<Range<usize>> {
        let scheme = Scheme::default();
        let mut out = Vec::new();
        for sent in split_sentences(caption).spans {
            let text = &caption[sent.clone()];
            let spans = scheme.tokenizer().spans(text);
            // pieces: (range within sentence, lowercased words)
            let mut pieces: Vec<(Range<usize>, Vec<String>)> = Vec::new();
            let mut cur: Option<(Range<usize>, Vec<String>)> = None;
            for r in spans {
                let tok = text[r.clone()].to_lowercase();
                if tok == "," || tok == "and" || tok == ";" {
                    pieces.extend(cur.take());
                    continue;
                }
                if tok.chars().all(|c| !c.is_alphanumeric()) {
                    continue;
                }
                match cur.as_mut() {
                    Some((range, words)) => {
                        range.end = r.end;
                        words.push(tok);
                    }
                    None => cur = Some((r, vec![tok])),
                }
            }
            pieces.extend(cur);

            let mut groups: Vec<(Range<usize>, Vec<String>)> = Vec::new();
            for (range, words) in pieces {
                match groups.last_mut() {
                    Some((last_range, last_words))
                        if !(looks_finite(last_words) && looks_finite(&words)) =>
                    {
                        last_range.end = range.end;
                        last_words.extend(words);
                    }
                    _ => groups.push((range, words)),
                }
            }
            out.extend(
                groups
                    .into_iter()
                    .map(|(r, _)| sent.start + r.start..sent.start + r.end),
            );
        }
        out
    }
}

impl AssertionExtractor for RuleBasedAssertions {
    fn extract(&self, caption_id: &str, caption: &str) -> Result<Vec<Assertion>, ProviderError> {
        Ok(Self::clauses(caption)
            .into_iter()
            .map(|r| Assertion {
                text: caption[r].to_string(),
                source_caption_id: caption_id.to_string(),
            })
            .collect())
    }
}
