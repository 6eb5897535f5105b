//! Object hallucination (CHAIR) and assertion-level precision (CapScore).

mod capscore;
mod chair;
mod vocab;

pub use capscore::{
    capscore, capscore_record, CapScoreReport, FailedRecord, FailurePolicy, RecordCapScore,
};
pub use chair::{chair, chair_caption, ChairReport, NoScorableRecords, RecordChair};
pub use vocab::{mentioned_objects, pluralize, Mention, ObjectVocabulary, VocabError};
