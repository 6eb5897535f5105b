use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::tokenize::{is_punct, split_sentences, tokenize, Scheme};

const COCO_TSV: &str = include_str!("../../data/coco_objects.tsv");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("vocabulary has no objects")]
    Empty,
    #[error("synonym `{synonym}` points at unknown object `{canonical}`")]
    UnknownCanonical { synonym: String, canonical: String },
    #[error("vocabulary line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read vocabulary {path}: {message}")]
    Io { path: String, message: String },
}

/// One object mention found in a caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mention {
    pub object: String,
    pub surface: String,
    pub sentence: usize,
}

/// Canonical object names plus the surface forms that refer to them.
///
/// Surface forms are matched on lowercased word sequences, so `Hot-Dog`,
/// `hot dog` and `HOT DOG` are the same form. Every canonical name and
/// synonym also matches its regular plural (`-s`, `-es`, consonant `y` to
/// `-ies`); an explicit entry always wins over a generated plural.
#[derive(Debug, Clone)]
pub struct ObjectVocabulary {
    canonical: BTreeSet<String>,
    synonyms: BTreeMap<String, String>,
    surfaces: HashMap<String, String>,
    max_words: usize,
}

fn words(text: &str) -> Vec<String> {
    tokenize(text, &Scheme::default())
        .tokens
        .into_iter()
        .filter(|t| !is_punct(t))
        .map(
            |t| match t.strip_suffix("'s").or_else(|| t.strip_suffix("\u{2019}s")) {
                Some(stem) if !stem.is_empty() => stem.to_string(),
                _ => t,
            },
        )
        .collect()
}

fn normalize(text: &str) -> String {
    words(text).join(" ")
}

/// Regular English plural of the last word.
pub fn pluralize(form: &str) -> String {
    let b = form.as_bytes();
    let n = b.len();
    let consonant_y = n >= 2 && b[n - 1] == b'y' && !b"aeiou".contains(&b[n - 2]);
    if consonant_y {
        format!("{}ies", &form[..n - 1])
    } else if ["s", "x", "z", "ch", "sh"]
        .iter()
        .any(|e| form.ends_with(e))
    {
        format!("{form}es")
    } else {
        format!("{form}s")
    }
}

impl ObjectVocabulary {
    pub fn new<C, S>(canonical: C, synonyms: S) -> Result<Self, VocabError>
    where
        C: IntoIterator,
        C::Item: AsRef<str>,
        S: IntoIterator<Item = (String, String)>,
    {
        let canonical: BTreeSet<String> = canonical
            .into_iter()
            .map(|c| normalize(c.as_ref()))
            .filter(|c| !c.is_empty())
            .collect();
        if canonical.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut syn = BTreeMap::new();
        for (s, c) in synonyms {
            let (s, c) = (normalize(&s), normalize(&c));
            if !canonical.contains(&c) {
                return Err(VocabError::UnknownCanonical {
                    synonym: s,
                    canonical: c,
                });
            }
            if !s.is_empty() {
                syn.insert(s, c);
            }
        }

        let explicit: Vec<(&String, &String)> = canonical
            .iter()
            .map(|c| (c, c))
            .chain(syn.iter().filter(|(s, _)| !canonical.contains(*s)))
            .collect();
        let mut surfaces = HashMap::new();
        for (s, c) in &explicit {
            surfaces.insert((*s).clone(), (*c).clone());
        }
        for (s, c) in &explicit {
            surfaces.entry(pluralize(s)).or_insert_with(|| (*c).clone());
        }
        let max_words = surfaces
            .keys()
            .map(|k| k.split(' ').count())
            .max()
            .unwrap_or(1);
        Ok(ObjectVocabulary {
            canonical,
            synonyms: syn,
            surfaces,
            max_words,
        })
    }

    /// Parse the TSV vocabulary format: a bare line is a canonical object,
    /// `surface<TAB>canonical` a synonym, `#` starts a comment line.
    pub fn from_tsv(text: &str) -> Result<Self, VocabError> {
        let mut canonical = Vec::new();
        let mut synonyms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(c), None, _) => canonical.push(c.to_string()),
                (Some(s), Some(c), None) => synonyms.push((s.to_string(), c.to_string())),
                _ => {
                    return Err(VocabError::Parse {
                        line: i + 1,
                        message: "expected one or two tab-separated columns".into(),
                    })
                }
            }
        }
        ObjectVocabulary::new(canonical, synonyms)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VocabError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        ObjectVocabulary::from_tsv(&text)
    }

    /// The 80 COCO detection categories with a synonym table.
    pub fn coco() -> Self {
        ObjectVocabulary::from_tsv(COCO_TSV).expect("bundled vocabulary parses")
    }

    pub fn objects(&self) -> &BTreeSet<String> {
        &self.canonical
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    /// Canonical object a surface form refers to.
    pub fn canonicalize(&self, surface: &str) -> Option<&str> {
        self.surfaces.get(&normalize(surface)).map(String::as_str)
    }

    /// Object mentions in reading order. At each word the longest matching
    /// surface form wins and matching resumes after it.
    pub fn mentions(&self, caption: &str) -> Vec<Mention> {
        let mut out = Vec::new();
        for (si, sentence) in split_sentences(caption).sentences(caption).enumerate() {
            let w = words(sentence);
            let mut i = 0;
            'scan: while i < w.len() {
                for n in (1..=self.max_words.min(w.len() - i)).rev() {
                    let key = w[i..i + n].join(" ");
                    if let Some(obj) = self.surfaces.get(&key) {
                        out.push(Mention {
                            object: obj.clone(),
                            surface: key,
                            sentence: si,
                        });
                        i += n;
                        continue 'scan;
                    }
                }
                i += 1;
            }
        }
        out
    }
}

impl Default for ObjectVocabulary {
    fn default() -> Self {
        ObjectVocabulary::coco()
    }
}

/// Multiset of canonical objects mentioned in `caption`.
pub fn mentioned_objects(caption: &str, vocab: &ObjectVocabulary) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for x in vocab.mentions(caption) {
        *m.entry(x.object).or_insert(0) += 1;
    }
    m
}
