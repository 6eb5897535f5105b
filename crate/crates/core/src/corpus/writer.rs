use std::fs::File;
use std::io::{BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::manifest::Shard;
use super::CorpusError;

struct OpenShard {
    path: PathBuf,
    out: BufWriter<File>,
    hash: Sha256,
    count: u64,
}

/// Writes JSONL shards `{prefix}-00000.jsonl`, `{prefix}-00001.jsonl`, ...
/// rolling over after `max_records` lines.
pub struct ShardWriter<T> {
    prefix: PathBuf,
    max_records: u64,
    emit_empty: bool,
    current: Option<OpenShard>,
    finished: Vec<Shard>,
    line: Vec<u8>,
    _t: PhantomData<fn(&T)>,
}

impl<T: Serialize> ShardWriter<T> {
    pub fn new(prefix: impl Into<PathBuf>, max_records: u64) -> Result<Self, CorpusError> {
        if max_records == 0 {
            return Err(CorpusError::InvalidMaxRecords);
        }
        Ok(ShardWriter {
            prefix: prefix.into(),
            max_records,
            emit_empty: false,
            current: None,
            finished: Vec::new(),
            line: Vec::new(),
            _t: PhantomData,
        })
    }

    /// Produce one empty shard when nothing was written.
    pub fn emit_empty(mut self, yes: bool) -> Self {
        self.emit_empty = yes;
        self
    }

    fn shard_path(&self, index: usize) -> PathBuf {
        let name = self
            .prefix
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.prefix
            .with_file_name(format!("{name}-{index:05}.jsonl"))
    }

    fn open(&mut self) -> Result<(), CorpusError> {
        let path = self.shard_path(self.finished.len());
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        }
        let f = File::create(&path).map_err(|e| CorpusError::io(&path, e))?;
        self.current = Some(OpenShard {
            path,
            out: BufWriter::new(f),
            hash: Sha256::new(),
            count: 0,
        });
        Ok(())
    }

    fn close(&mut self) -> Result<(), CorpusError> {
        if let Some(mut s) = self.current.take() {
            s.out.flush().map_err(|e| CorpusError::io(&s.path, e))?;
            self.finished.push(Shard {
                path: s.path.to_string_lossy().into_owned(),
                record_count: s.count,
                checksum: hex::encode(s.hash.finalize()),
            });
        }
        Ok(())
    }

    pub fn push(&mut self, item: &T) -> Result<(), CorpusError> {
        self.line.clear();
        serde_json::to_writer(&mut self.line, item)
            .map_err(|e| CorpusError::Serialization(e.to_string()))?;
        self.line.push(b'\n');
        if self.current.is_none() {
            self.open()?;
        }
        let s = self.current.as_mut().expect("shard open");
        s.out
            .write_all(&self.line)
            .map_err(|e| CorpusError::io(&s.path, e))?;
        s.hash.update(&self.line);
        s.count += 1;
        if s.count >= self.max_records {
            self.close()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<Vec<Shard>, CorpusError> {
        if self.finished.is_empty() && self.current.is_none() && self.emit_empty {
            self.open()?;
        }
        self.close()?;
        Ok(std::mem::take(&mut self.finished))
    }
}

/// Write every item of `records` under `prefix`, returning the shards made.
pub fn write_shard<T, I>(
    records: I,
    prefix: &Path,
    max_records: u64,
) -> Result<Vec<Shard>, CorpusError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut w = ShardWriter::new(prefix, max_records)?;
    for r in records {
        w.push(&r)?;
    }
    w.finish()
}
