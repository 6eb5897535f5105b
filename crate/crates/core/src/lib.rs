//! Curation toolkit for image-caption corpora.
//!
//! * [`corpus`]: JSONL records, manifests, bounded-memory streaming and sharded writes
//! * [`tokenize`]: token counting, sentence splitting, budgets
//! * [`format`]: SSC / DSC / DSC+ / AFC contracts, validation and classification
//! * [`richness`]: token-length histograms, unique entities, assertions and ANA
//! * [`hallucination`]: CHAIR and CapScore
//! * [`mixer`]: ratio sampling, concatenation and uniform union of caption sources
//! * [`providers`]: HTTP clients for captioner / assertion / VQA services and mocks
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is on and the calling thread otherwise.

pub mod corpus;
pub mod exec;
pub mod format;
pub mod hallucination;
pub mod hashing;
pub mod lexicon;
pub mod mixer;
pub mod providers;
pub mod richness;
pub mod tokenize;

pub use corpus::{CaptionRecord, DatasetManifest};
pub use exec::Exec;
pub use format::{CaptionFormat, FormatSpec, FormatSpecs, Validator};
pub use tokenize::Scheme;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
