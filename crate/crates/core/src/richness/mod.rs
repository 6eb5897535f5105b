//! Caption richness and diversity: token-length distributions, unique
//! entities per caption source, and the average number of assertions (ANA).
//!
//! Reference ANA values reported for the original captioner (SSC 2.49,
//! DSC 8.13, DSC+ 12.20) came from that model's captions scored by an LLM;
//! they cannot be reproduced without both and are not asserted here.

mod ana;
mod assertions;
mod entities;
mod histogram;

pub use ana::{ana, AnaCell, AnaReport};
pub use assertions::{Assertion, AssertionExtractor, RuleBasedAssertions};
pub use entities::{
    entity_diversity, normalize_entity, sample_by_hash, EntityExtractor, EntityReport,
    HeuristicEntities,
};
pub use histogram::{token_length_histogram, Histogram, HistogramError, OPEN_END};
