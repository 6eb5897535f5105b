//! Deterministic tokenization, token counting and sentence splitting.
//!
//! Token counts are always relative to a named scheme. The default scheme
//! (`unicode`) segments text on Unicode word boundaries (UAX #29), keeps each
//! word and each punctuation mark as its own token, drops whitespace and
//! lowercases everything. It stands in for a subword tokenizer; users who need
//! exact subword counts register their own [`Tokenizer`] under a new name.
//!
//! Registered schemes:
//!
//! | name        | segmentation                          | lowercase |
//! |-------------|---------------------------------------|-----------|
//! | `unicode`   | UAX #29 words + standalone punctuation | yes      |
//! | `cased`     | same as `unicode`                     | no        |
//! | `whitespace`| runs of non-whitespace                | yes       |
//!
//! `default` is an alias for `unicode`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

pub const DEFAULT_SCHEME: &str = "unicode";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("unknown tokenizer scheme `{0}`")]
    UnknownScheme(String),
}

/// A tokenization scheme. Implementations return byte ranges so callers can
/// cut the original text on token boundaries.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn lowercases(&self) -> bool;

    /// Byte ranges of tokens in `text`, ascending and non-overlapping.
    /// No range may be empty.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn normalize(&self, piece: &str) -> String {
        if self.lowercases() {
            piece.to_lowercase()
        } else {
            piece.to_string()
        }
    }
}

struct UnicodeWords {
    name: &'static str,
    lowercase: bool,
}

impl Tokenizer for UnicodeWords {
    fn name(&self) -> &str {
        self.name
    }

    fn lowercases(&self) -> bool {
        self.lowercase
    }

    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        text.split_word_bound_indices()
            .filter(|(_, seg)| !seg.chars().all(char::is_whitespace))
            .map(|(i, seg)| i..i + seg.len())
            .collect()
    }
}

struct Whitespace;

impl Tokenizer for Whitespace {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn lowercases(&self) -> bool {
        true
    }

    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    out.push(s..i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push(s..text.len());
        }
        out
    }
}

/// Cheaply clonable handle to a registered tokenizer.
#[derive(Clone)]
pub struct Scheme(Arc<dyn Tokenizer>);

impl Scheme {
    pub fn new(tokenizer: impl Tokenizer + 'static) -> Self {
        Scheme(Arc::new(tokenizer))
    }

    /// Resolve a name against the built-in registry.
    pub fn by_name(name: &str) -> Result<Self, TokenizeError> {
        SchemeRegistry::builtin().get(name)
    }

    pub fn name(&self) -> &str {
        self.0.name()
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.0.as_ref()
    }
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::new(UnicodeWords {
            name: DEFAULT_SCHEME,
            lowercase: true,
        })
    }
}

impl fmt::Debug for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Scheme").field(&self.name()).finish()
    }
}

#[derive(Clone, Debug)]
pub struct SchemeRegistry {
    schemes: BTreeMap<String, Scheme>,
}

impl SchemeRegistry {
    pub fn builtin() -> Self {
        let mut r = SchemeRegistry {
            schemes: BTreeMap::new(),
        };
        r.register(Scheme::default());
        r.register_as("default", Scheme::default());
        r.register(Scheme::new(UnicodeWords {
            name: "cased",
            lowercase: false,
        }));
        r.register(Scheme::new(Whitespace));
        r
    }

    pub fn register(&mut self, scheme: Scheme) {
        self.schemes.insert(scheme.name().to_string(), scheme);
    }

    pub fn register_as(&mut self, name: &str, scheme: Scheme) {
        self.schemes.insert(name.to_string(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<Scheme, TokenizeError> {
        self.schemes
            .get(name)
            .cloned()
            .ok_or_else(|| TokenizeError::UnknownScheme(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.schemes.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub scheme: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn tokenize(text: &str, scheme: &Scheme) -> TokenSequence {
    let t = scheme.tokenizer();
    TokenSequence {
        tokens: t
            .spans(text)
            .into_iter()
            .map(|r| t.normalize(&text[r]))
            .collect(),
        scheme: scheme.name().to_string(),
    }
}

pub fn count_tokens(text: &str, scheme: &Scheme) -> usize {
    scheme.tokenizer().spans(text).len()
}

pub fn fits_budget(text: &str, budget: usize, scheme: &Scheme) -> bool {
    count_tokens(text, scheme) <= budget
}

/// Longest prefix of `text` made of whole tokens with at most `budget`
/// tokens. Returns the prefix and whether anything was cut.
pub fn truncate_to_budget<'a>(text: &'a str, budget: usize, scheme: &Scheme) -> (&'a str, bool) {
    let spans = scheme.tokenizer().spans(text);
    if spans.len() <= budget {
        return (text, false);
    }
    let end = if budget == 0 {
        0
    } else {
        spans[budget - 1].end
    };
    (&text[..end], true)
}

/// True for tokens made only of punctuation or symbols.
pub fn is_punct(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// Abbreviations whose trailing period never ends a sentence. Matched
/// case-insensitively against the whitespace-delimited word carrying the dot.
pub const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "vs.", "cf.", "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "mt.", "jr.", "sr.",
    "approx.", "fig.", "inc.", "ltd.", "co.", "u.s.", "u.k.",
];

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '}'];

/// Sentences of a text as byte ranges; the text between consecutive ranges
/// (and before the first / after the last) is whitespace only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSplit {
    pub spans: Vec<Range<usize>>,
}

impl SentenceSplit {
    pub fn sentences<'a>(&'a self, text: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.spans.iter().map(move |r| &text[r.clone()])
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Split on runs of `.`, `!` or `?` (plus closing quotes/brackets) that are
/// followed by whitespace or the end of text. A lone period closing one of
/// [`ABBREVIATIONS`] does not end a sentence unless it ends the text.
pub fn split_sentences(text: &str) -> SentenceSplit {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(pos);
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
                j += 1;
            }
            let punct_end = j;
            while j + 1 < chars.len() && CLOSERS.contains(&chars[j + 1].1) {
                j += 1;
            }
            let at_end = j + 1 == chars.len();
            let boundary = at_end || chars[j + 1].1.is_whitespace();
            let abbrev = c == '.'
                && punct_end == i
                && !at_end
                && ends_with_abbreviation(&text[start.unwrap_or(0)..pos + 1]);
            if boundary && !abbrev {
                let end = if at_end { text.len() } else { chars[j + 1].0 };
                spans.push(start.take().unwrap_or(pos)..end);
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        if end > s {
            spans.push(s..end);
        }
    }
    SentenceSplit { spans }
}

fn ends_with_abbreviation(upto_dot: &str) -> bool {
    let word = upto_dot
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(['(', '"', '\'', '\u{201c}']);
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}
