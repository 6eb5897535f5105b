use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::corpus::CaptionRecord;
use crate::exec::Exec;
use crate::format::CaptionFormat;
use crate::hashing::id_hash;
use crate::lexicon;
use crate::providers::ProviderError;
use crate::tokenize::{is_punct, Scheme};

/// Turns a caption into a set of normalized (casefolded, trimmed) entities.
pub trait EntityExtractor: Send + Sync {
    fn extract(&self, text: &str) -> Result<BTreeSet<String>, ProviderError>;
}

/// Casefold, trim and collapse inner whitespace.
pub fn normalize_entity(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Capitalization-based entity spotting.
///
/// An entity is a maximal run of tokens that each start with an uppercase
/// letter or contain a digit. Runs are broken by punctuation and lowercase
/// words, except that `-` and `&` written without surrounding spaces join
/// their neighbours (`Coca-Cola`, `AT&T`). The first word of a sentence is
/// capitalized by convention, so it is skipped when it is a stopword or one
/// of [`lexicon::SENTENCE_OPENERS`] (`A photo of ...`, `Buy ...`), unless it
/// is an all-caps acronym.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEntities;

#[derive(PartialEq)]
enum Tok {
    Entity,
    Joiner,
    Break,
    SentenceEnd,
}

fn is_acronym(w: &str) -> bool {
    w.chars().filter(|c| c.is_alphabetic()).count() >= 2
        && w.chars().all(|c| !c.is_alphabetic() || c.is_uppercase())
}

impl HeuristicEntities {
    pub fn spans(text: &str) -> Vec<String> {
        let scheme = Scheme::by_name("cased").expect("builtin scheme");
        let spans = scheme.tokenizer().spans(text);
        let mut sentence_start = true;
        let kinds: Vec<Tok> = spans
            .iter()
            .map(|r| {
                let t = &text[r.clone()];
                if is_punct(t) {
                    if t.contains(['.', '!', '?']) {
                        sentence_start = true;
                        return Tok::SentenceEnd;
                    }
                    if t == "-" || t == "&" {
                        return Tok::Joiner;
                    }
                    return Tok::Break;
                }
                let has_digit = t.chars().any(|c| c.is_ascii_digit());
                let capital = t.chars().next().is_some_and(char::is_uppercase);
                let initial = std::mem::replace(&mut sentence_start, false);
                let lower = t.to_lowercase();
                let opener = initial
                    && !is_acronym(t)
                    && (lexicon::is_stopword(&lower)
                        || lexicon::SENTENCE_OPENERS.contains(&lower.as_str()));
                if (has_digit || capital) && !opener {
                    Tok::Entity
                } else {
                    Tok::Break
                }
            })
            .collect();

        let mut out = Vec::new();
        let mut i = 0;
        while i < spans.len() {
            if kinds[i] != Tok::Entity {
                i += 1;
                continue;
            }
            let start = spans[i].start;
            let mut end = spans[i].end;
            let mut j = i + 1;
            while j < spans.len() {
                match kinds[j] {
                    Tok::Entity => {
                        end = spans[j].end;
                        j += 1;
                    }
                    Tok::Joiner
                        if j + 1 < spans.len()
                            && kinds[j + 1] == Tok::Entity
                            && spans[j].start == spans[j - 1].end
                            && spans[j + 1].start == spans[j].end =>
                    {
                        end = spans[j + 1].end;
                        j += 2;
                    }
                    _ => break,
                }
            }
            out.push(normalize_entity(&text[start..end]));
            i = j;
        }
        out
    }
}

impl EntityExtractor for HeuristicEntities {
    fn extract(&self, text: &str) -> Result<BTreeSet<String>, ProviderError> {
        Ok(Self::spans(text).into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityReport {
    /// Unique entities per caption source over the sample.
    pub per_source: BTreeMap<CaptionFormat, usize>,
    /// Sampled records carrying each source.
    pub records_with_source: BTreeMap<CaptionFormat, usize>,
    pub sample_size: usize,
    pub requested_sample: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entities: Option<BTreeMap<CaptionFormat, BTreeSet<String>>>,
}

/// The `k` records with the smallest `id_hash(seed, "sample", id)`. The same
/// seed picks the same ids regardless of input order.
pub fn sample_by_hash<I>(records: I, k: usize, seed: u64) -> Vec<CaptionRecord>
where
    I: IntoIterator<Item = CaptionRecord>,
{
    struct Keyed(u64, CaptionRecord);
    impl PartialEq for Keyed {
        fn eq(&self, o: &Self) -> bool {
            (self.0, &self.1.id) == (o.0, &o.1.id)
        }
    }
    impl Eq for Keyed {}
    impl PartialOrd for Keyed {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Keyed {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            (self.0, &self.1.id).cmp(&(o.0, &o.1.id))
        }
    }

    let mut heap = BinaryHeap::with_capacity(k + 1);
    if k == 0 {
        return Vec::new();
    }
    for r in records {
        let key = Keyed(id_hash(seed, "sample", &r.id), r);
        if heap.len() < k {
            heap.push(key);
        } else if heap.peek().is_some_and(|top| key < *top) {
            heap.pop();
            heap.push(key);
        }
    }
    let mut out: Vec<CaptionRecord> = heap.into_iter().map(|k| k.1).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Unique-entity counts per source, all sources evaluated on one shared
/// sample of records.
pub fn entity_diversity<I>(
    records: I,
    sources: &[CaptionFormat],
    extractor: &dyn EntityExtractor,
    sample_size: usize,
    seed: u64,
    keep_sets: bool,
    exec: Exec,
) -> Result<EntityReport, ProviderError>
where
    I: IntoIterator<Item = CaptionRecord>,
{
    let sample = sample_by_hash(records, sample_size.max(1), seed);
    let mut per_source = BTreeMap::new();
    let mut with_source = BTreeMap::new();
    let mut sets = BTreeMap::new();
    for &src in sources {
        let found = exec.map(&sample, |r| r.text(src).map(|t| extractor.extract(t)));
        let mut union = BTreeSet::new();
        let mut carrying = 0;
        for f in found.into_iter().flatten() {
            carrying += 1;
            union.extend(f?);
        }
        per_source.insert(src, union.len());
        with_source.insert(src, carrying);
        sets.insert(src, union);
    }
    Ok(EntityReport {
        per_source,
        records_with_source: with_source,
        sample_size: sample.len(),
        requested_sample: sample_size,
        seed,
        entities: keep_sets.then_some(sets),
    })
}
