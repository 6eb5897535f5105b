use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;

use super::manifest::{sha256_file, DatasetManifest, Shard};
use super::record::{parse_record, CaptionRecord};
use super::CorpusError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamOptions {
    /// Abort on the first malformed line and verify shard checksums.
    pub strict: bool,
}

/// Lazily reads records shard by shard. Holds at most one line in memory.
///
/// Blank lines are ignored. In lenient mode every other line yields exactly
/// one item, either a record or an error.
pub struct RecordStream {
    shards: std::vec::IntoIter<(PathBuf, Shard)>,
    current: Option<(String, std::io::Lines<BufReader<File>>, u64)>,
    opts: StreamOptions,
    done: bool,
}

/// Fails with `ShardMissing` before reading anything if a shard file is absent.
pub fn stream_manifest(
    manifest: &DatasetManifest,
    opts: StreamOptions,
) -> Result<RecordStream, CorpusError> {
    let shards: Vec<_> = manifest
        .shards
        .iter()
        .map(|s| (manifest.resolve(s), s.clone()))
        .collect();
    for (path, _) in &shards {
        if !path.is_file() {
            return Err(CorpusError::ShardMissing(path.display().to_string()));
        }
    }
    Ok(RecordStream {
        shards: shards.into_iter(),
        current: None,
        opts,
        done: false,
    })
}

/// Stream a single shard of a manifest; used by shard-parallel workers.
pub fn stream_shard(
    manifest: &DatasetManifest,
    index: usize,
    opts: StreamOptions,
) -> Result<RecordStream, CorpusError> {
    let one = DatasetManifest {
        shards: vec![manifest.shards[index].clone()],
        ..manifest.clone()
    };
    stream_manifest(&one, opts)
}

impl RecordStream {
    fn open_next(&mut self) -> Option<Result<(), CorpusError>> {
        let (path, shard) = self.shards.next()?;
        let shown = path.display().to_string();
        if self.opts.strict {
            match sha256_file(&path) {
                Ok(actual) if actual != shard.checksum => {
                    return Some(Err(CorpusError::ChecksumMismatch {
                        path: shown,
                        expected: shard.checksum,
                        actual,
                    }))
                }
                Err(e) => return Some(Err(e)),
                Ok(_) => {}
            }
        }
        match File::open(&path) {
            Ok(f) => {
                self.current = Some((shown, BufReader::new(f).lines(), 0));
                Some(Ok(()))
            }
            Err(_) => Some(Err(CorpusError::ShardMissing(shown))),
        }
    }

    /// Records only; errors are passed to `on_error`.
    pub fn records(
        self,
        mut on_error: impl FnMut(CorpusError),
    ) -> impl Iterator<Item = CaptionRecord> {
        self.filter_map(move |r| r.map_err(&mut on_error).ok())
    }
}

impl Iterator for RecordStream {
    type Item = Result<CaptionRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.done {
                return None;
            }
            if self.current.is_none() {
                match self.open_next()? {
                    Ok(()) => {}
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                }
            }
            let (shard, lines, lineno) = self.current.as_mut()?;
            match lines.next() {
                None => {
                    self.current = None;
                    continue;
                }
                Some(Err(e)) => {
                    let err = CorpusError::Io {
                        path: shard.clone(),
                        message: e.to_string(),
                    };
                    self.current = None;
                    if self.opts.strict {
                        self.done = true;
                    }
                    return Some(Err(err));
                }
                Some(Ok(line)) => {
                    *lineno += 1;
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Some(parse_record(&line).map_err(|source| {
                        if self.opts.strict {
                            self.done = true;
                        }
                        CorpusError::Record {
                            shard: shard.clone(),
                            line: *lineno,
                            source,
                        }
                    }));
                }
            }
        }
    }
}
