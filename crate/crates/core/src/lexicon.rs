//! Closed word lists shared by the heuristics. All entries are lowercase.

pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "around", "as", "at", "be", "been", "being", "below", "between", "both", "but", "by", "can",
    "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from",
    "further", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how",
    "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may", "me", "might", "more",
    "most", "must", "my", "near", "nearby", "no", "nor", "not", "of", "off", "on", "once", "one",
    "only", "or", "other", "our", "out", "over", "own", "same", "shall", "she", "should", "so",
    "some", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were",
    "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
    "you", "your",
];

/// Auxiliaries and copulas; any of these makes a clause finite.
pub const FINITE_AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "am", "has", "have", "had", "does", "do", "did", "can", "could",
    "will", "would", "may", "might", "shall", "should", "must", "isn't", "aren't", "wasn't",
    "weren't", "doesn't", "don't", "can't", "won't", "it's", "there's",
];

/// Words that introduce a noun phrase; a following `-s` word is a plural
/// noun rather than a verb.
pub const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "many", "several", "few", "two",
    "three", "four", "five", "six", "seven", "eight", "nine", "ten", "of", "its", "his", "her",
    "their", "our", "my", "your", "both", "all", "various", "multiple", "other", "more", "no",
    "any", "each", "with", "and", "or", "in", "on", "at", "by", "for", "from",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

pub fn is_determiner(word: &str) -> bool {
    DETERMINERS.contains(&word) || word.chars().all(|c| c.is_ascii_digit())
}

pub fn is_auxiliary(word: &str) -> bool {
    FINITE_AUXILIARIES.contains(&word)
}

/// Capitalized words that commonly open captions and alt texts without
/// naming anything.
pub const SENTENCE_OPENERS: &[&str] = &[
    "buy",
    "shop",
    "get",
    "see",
    "view",
    "visit",
    "download",
    "click",
    "order",
    "find",
    "discover",
    "explore",
    "watch",
    "free",
    "best",
    "top",
    "cheap",
    "sale",
    "photo",
    "image",
    "picture",
    "stock",
    "closeup",
    "close",
    "portrait",
    "illustration",
    "vector",
    "then",
    "two",
    "three",
    "several",
    "many",
    "another",
    "inside",
    "outside",
    "front",
    "people",
];
