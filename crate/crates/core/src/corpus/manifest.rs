use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub path: String,
    pub record_count: u64,
    /// SHA-256 of the file bytes, lowercase hex.
    pub checksum: String,
}

/// Ordered list of shards forming one corpus.
///
/// On disk this is a JSON document. Relative shard paths are resolved
/// against the directory holding the manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub shards: Vec<Shard>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            shards: Vec::new(),
            base_dir: PathBuf::new(),
        }
    }
}

impl DatasetManifest {
    pub fn new(shards: Vec<Shard>) -> Result<Self, CorpusError> {
        let m = DatasetManifest {
            shards,
            ..Default::default()
        };
        m.check()?;
        Ok(m)
    }

    pub fn total_records(&self) -> u64 {
        self.shards.iter().map(|s| s.record_count).sum()
    }

    pub fn resolve(&self, shard: &Shard) -> PathBuf {
        let p = Path::new(&shard.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for s in &self.shards {
            if !seen.insert(s.path.as_str()) {
                return Err(CorpusError::InvalidManifest(format!(
                    "duplicate shard path `{}`",
                    s.path
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| CorpusError::InvalidManifest(format!("{}: {e}", path.display())))?;
        m.check()?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    /// Write as JSON; shard paths under the manifest's directory are stored
    /// relative to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let shards = self
            .shards
            .iter()
            .map(|s| {
                let abs = self.resolve(s);
                let rel = abs
                    .strip_prefix(&dir)
                    .ok()
                    .filter(|r| !r.as_os_str().is_empty() && !dir.as_os_str().is_empty())
                    .map(|r| r.to_string_lossy().into_owned())
                    .unwrap_or_else(|| abs.to_string_lossy().into_owned());
                Shard {
                    path: rel,
                    ..s.clone()
                }
            })
            .collect();
        let out = DatasetManifest {
            schema_version: self.schema_version,
            shards,
            base_dir: dir,
        };
        let json = serde_json::to_string_pretty(&out)
            .map_err(|e| CorpusError::Serialization(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| CorpusError::io(path, e))
    }

    /// Index existing JSONL files, counting non-blank lines and hashing them.
    pub fn index_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self, CorpusError> {
        let shards = paths
            .iter()
            .map(|p| {
                let p = p.as_ref();
                let (checksum, record_count) = checksum_and_lines(p)?;
                Ok(Shard {
                    path: p.to_string_lossy().into_owned(),
                    record_count,
                    checksum,
                })
            })
            .collect::<Result<Vec<_>, CorpusError>>()?;
        DatasetManifest::new(shards)
    }

    /// A manifest path, or a bare `.jsonl` file treated as a one-shard corpus.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "jsonl") {
            if !path.exists() {
                return Err(CorpusError::ShardMissing(path.display().to_string()));
            }
            Self::index_files(&[path])
        } else {
            Self::load(path)
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CorpusError> {
    let mut f = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(|e| CorpusError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn checksum_and_lines(path: &Path) -> Result<(String, u64), CorpusError> {
    let f = File::open(path).map_err(|_| CorpusError::ShardMissing(path.display().to_string()))?;
    let mut reader = BufReader::new(f);
    let mut h = Sha256::new();
    let mut line = Vec::new();
    let mut count = 0;
    loop {
        line.clear();
        let n = reader
            .read_until(b'\n', &mut line)
            .map_err(|e| CorpusError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&line);
        if !line.iter().all(u8::is_ascii_whitespace) {
            count += 1;
        }
    }
    Ok((hex::encode(h.finalize()), count))
}
