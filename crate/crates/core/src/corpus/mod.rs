//! JSONL caption corpora: record schema, manifests, streaming reads and
//! sharded writes.
//!
//! A record is one JSON object per line:
//!
//! ```json
//! {"id":"a1","image_ref":"img/a1.jpg","alt_text":"dog","captions":{"ssc":"A dog."},
//!  "gt_objects":["dog"],"ocr_text":"...","meta":{"source":"web"}}
//! ```
//!
//! Caption keys are `ssc`, `dsc`, `dscplus` and `afc`. Alt text lives in its
//! own field and is never a caption key.

mod manifest;
mod record;
mod stream;
mod writer;

use std::path::Path;

use thiserror::Error;

pub use manifest::{sha256_file, DatasetManifest, Shard, SCHEMA_VERSION};
pub use record::{parse_record, CaptionRecord, RecordError};
pub use stream::{stream_manifest, stream_shard, RecordStream, StreamOptions};
pub use writer::{write_shard, ShardWriter};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("shard not found: {0}")]
    ShardMissing(String),
    #[error("checksum mismatch for {path}: manifest {expected}, file {actual}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("{shard}:{line}: {source}")]
    Record {
        shard: String,
        line: u64,
        source: RecordError,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("max_records must be at least 1")]
    InvalidMaxRecords,
}

impl CorpusError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn is_record_error(&self) -> bool {
        matches!(self, CorpusError::Record { .. })
    }
}
