//! Fixture generators whose expected metric values are known by
//! construction, so tests never recompute them with library code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use capkit::hallucination::ObjectVocabulary;
use capkit::{CaptionFormat, CaptionRecord};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

const ONSET: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "v"];
const VOWEL: &[&str] = &["a", "e", "i", "o", "u"];
const CODA: &[&str] = &["b", "d", "g", "k", "m", "n", "p", "t"];
const FILLER: &[&str] = &[
    "the", "near", "a", "big", "beside", "under", "with", "some", "over", "by", "old",
];
const OPENER: &[&str] = &["The", "A", "Some", "Here"];

fn nonce(rng: &mut StdRng) -> String {
    let mut w = String::new();
    for _ in 0..2 {
        w.push_str(ONSET.choose(rng).unwrap());
        w.push_str(VOWEL.choose(rng).unwrap());
        w.push_str(CODA.choose(rng).unwrap());
    }
    w
}

/// A random vocabulary of invented nouns: canonical names (some two words
/// long) and single-word synonyms. None ends in a letter that changes the
/// plural rule, so every plural is the name plus `s`.
pub struct ChairWorld {
    pub vocab: ObjectVocabulary,
    pub canonical: Vec<String>,
    /// surface form -> canonical
    pub surfaces: Vec<(String, String)>,
}

impl ChairWorld {
    pub fn random(rng: &mut StdRng, max_objects: usize) -> Self {
        let n = rng.gen_range(1..=max_objects);
        let mut used = BTreeSet::new();
        let mut fresh = |rng: &mut StdRng| loop {
            let w = nonce(rng);
            if used.insert(w.clone()) {
                return w;
            }
        };
        let mut canonical = Vec::new();
        for _ in 0..n {
            let name = if rng.gen_bool(0.2) {
                format!("{} {}", fresh(rng), fresh(rng))
            } else {
                fresh(rng)
            };
            canonical.push(name);
        }
        let mut synonyms = Vec::new();
        for c in &canonical {
            if rng.gen_bool(0.3) {
                synonyms.push((fresh(rng), c.clone()));
            }
        }
        let vocab = ObjectVocabulary::new(&canonical, synonyms.clone()).unwrap();
        let surfaces = canonical
            .iter()
            .map(|c| (c.clone(), c.clone()))
            .chain(synonyms)
            .collect();
        ChairWorld {
            vocab,
            canonical,
            surfaces,
        }
    }
}

/// Per-record counts fixed at generation time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChairTruth {
    pub mentioned: u64,
    pub hallucinated: u64,
    pub sentences: u64,
    pub flagged: u64,
    pub scored: u64,
    pub no_caption: u64,
    pub no_gt: u64,
}

impl ChairTruth {
    pub fn chair_i(&self) -> f64 {
        if self.mentioned == 0 {
            0.0
        } else {
            self.hallucinated as f64 / self.mentioned as f64
        }
    }

    pub fn chair_s(&self) -> f64 {
        if self.sentences == 0 {
            0.0
        } else {
            self.flagged as f64 / self.sentences as f64
        }
    }
}

fn styled(rng: &mut StdRng, surface: &str, plural: bool) -> String {
    let s = if plural {
        format!("{surface}s")
    } else {
        surface.to_string()
    };
    match rng.gen_range(0..6) {
        0 => s.to_uppercase(),
        1 => {
            let mut c = s.chars();
            let first = c.next().unwrap().to_uppercase().to_string();
            first + c.as_str()
        }
        _ => s,
    }
}

/// A corpus of DSC captions over `world`, with CHAIR totals counted while
/// the text is written.
pub fn chair_corpus(
    rng: &mut StdRng,
    world: &ChairWorld,
    n: usize,
) -> (Vec<CaptionRecord>, ChairTruth) {
    let mut truth = ChairTruth::default();
    let mut out = Vec::new();
    for i in 0..n {
        let mut rec =
            CaptionRecord::new(format!("c{i:03}"), format!("img/{i}.jpg")).with_alt("alt");
        let has_gt = rng.gen_bool(0.85);
        let has_caption = rng.gen_bool(0.9);
        let gt: BTreeSet<String> = world
            .canonical
            .iter()
            .filter(|_| rng.gen_bool(0.4))
            .cloned()
            .collect();
        if has_gt {
            // ground truth may be written with a synonym or in capitals
            let written: Vec<String> = gt
                .iter()
                .map(|c| {
                    let alias = world.surfaces.iter().find(|(s, k)| k == c && s != c);
                    match alias {
                        Some((s, _)) if rng.gen_bool(0.5) => s.clone(),
                        _ if rng.gen_bool(0.2) => c.to_uppercase(),
                        _ => c.clone(),
                    }
                })
                .collect();
            rec = rec.with_gt(written);
        }
        let mut caption_truth = ChairTruth::default();
        if has_caption {
            let mut sentences = Vec::new();
            for _ in 0..rng.gen_range(1..=4) {
                let mut words = vec![OPENER.choose(rng).unwrap().to_string()];
                let mut flagged = false;
                for _ in 0..rng.gen_range(0..=4) {
                    // a filler word always separates mentions
                    words.push(FILLER.choose(rng).unwrap().to_string());
                    let (surface, canon) = world.surfaces.choose(rng).unwrap();
                    let plural = rng.gen_bool(0.3);
                    words.push(styled(rng, surface, plural));
                    caption_truth.mentioned += 1;
                    if !gt.contains(canon) {
                        caption_truth.hallucinated += 1;
                        flagged = true;
                    }
                }
                words.push(FILLER.choose(rng).unwrap().to_string());
                caption_truth.sentences += 1;
                caption_truth.flagged += u64::from(flagged);
                let end = [".", "!", "?"].choose(rng).unwrap();
                sentences.push(words.join(" ") + end);
            }
            rec = rec.with_caption(CaptionFormat::Dsc, sentences.join(" "));
        }
        match (has_caption, has_gt) {
            (false, _) => truth.no_caption += 1,
            (true, false) => truth.no_gt += 1,
            (true, true) => {
                truth.scored += 1;
                truth.mentioned += caption_truth.mentioned;
                truth.hallucinated += caption_truth.hallucinated;
                truth.sentences += caption_truth.sentences;
                truth.flagged += caption_truth.flagged;
            }
        }
        out.push(rec);
    }
    (out, truth)
}

const ENTITY_POOL: &[&str] = &[
    "Paris",
    "New York",
    "Nike",
    "Tokyo",
    "Golden Gate Bridge",
    "Coca-Cola",
    "IBM",
    "Lake Tahoe",
    "Berlin",
    "Sony",
    "Mount Fuji",
    "Adidas",
    "Central Park",
    "London",
    "Toyota",
    "NASA",
    "Eiffel Tower",
    "Kyoto",
    "Starbucks",
    "Amazon River",
    "Rome",
    "Lego",
    "Sahara",
    "Oslo",
];
const LINKS: &[&str] = &["near", "with", "and", "beside", "from", "by"];

/// 1-3 distinct pool entities written into a caption that starts with a
/// lowercase word, and the normalized names a correct extractor must find.
fn entity_caption(rng: &mut StdRng, pool: &[&str]) -> (String, BTreeSet<String>) {
    let k = rng.gen_range(1..=3);
    let picked: Vec<&str> = pool.choose_multiple(rng, k).copied().collect();
    let mut words = vec!["photo".to_string(), "of".to_string()];
    for (i, e) in picked.iter().enumerate() {
        if i > 0 {
            words.push(LINKS.choose(rng).unwrap().to_string());
        }
        words.push(e.to_string());
    }
    words.push("today".into());
    let text = words.join(" ") + ".";
    (text, picked.iter().map(|e| e.to_lowercase()).collect())
}

/// Record id -> source -> entity names written into that caption.
pub type ExpectedEntities = BTreeMap<String, BTreeMap<CaptionFormat, BTreeSet<String>>>;

/// Records whose alt text and SSC/DSC captions each name a few entities;
/// the per-record expected entity sets are returned alongside.
pub fn entity_corpus(rng: &mut StdRng, n: usize) -> (Vec<CaptionRecord>, ExpectedEntities) {
    // sources draw from overlapping slices so their unions differ
    let pools: [(CaptionFormat, &[&str]); 3] = [
        (CaptionFormat::AltText, &ENTITY_POOL[..24]),
        (CaptionFormat::Ssc, &ENTITY_POOL[..8]),
        (CaptionFormat::Dsc, &ENTITY_POOL[4..20]),
    ];
    let mut recs = Vec::new();
    let mut expected = BTreeMap::new();
    for i in 0..n {
        let id = format!("e{i:04}");
        let mut rec = CaptionRecord::new(&id, format!("img/{i}.jpg"));
        let mut sets = BTreeMap::new();
        for (fmt, pool) in pools {
            if fmt != CaptionFormat::AltText && rng.gen_bool(0.25) {
                continue;
            }
            let (text, ents) = entity_caption(rng, pool);
            rec = if fmt == CaptionFormat::AltText {
                rec.with_alt(text)
            } else {
                rec.with_caption(fmt, text)
            };
            sets.insert(fmt, ents);
        }
        expected.insert(id, sets);
        recs.push(rec);
    }
    (recs, expected)
}
