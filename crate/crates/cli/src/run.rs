//! Errors with exit codes, and the `run.json` written next to every output.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use capkit::corpus::CorpusError;
use capkit::format::FormatError;
use capkit::hallucination::{NoScorableRecords, VocabError};
use capkit::mixer::MixError;
use capkit::providers::ProviderError;
use capkit::tokenize::TokenizeError;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("provider: {0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Provider(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Config(_) | ProviderError::Template(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<MixError> for CliError {
    fn from(e: MixError) -> Self {
        match e {
            MixError::InvalidRecipe(_) => CliError::Config(e.to_string()),
            MixError::MissingSource { .. } => CliError::Io(e.to_string()),
            MixError::Corpus(c) => c.into(),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TokenizeError> for CliError {
    fn from(e: TokenizeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<VocabError> for CliError {
    fn from(e: VocabError) -> Self {
        match e {
            VocabError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<NoScorableRecords> for CliError {
    fn from(e: NoScorableRecords) -> Self {
        CliError::Config(e.to_string())
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize)]
struct Timing {
    phase: String,
    ms: f64,
}

/// Accumulates what `run.json` records about one command invocation.
pub struct RunLog {
    command: String,
    started_unix_s: u64,
    start: Instant,
    last: Instant,
    timings: Vec<Timing>,
    outputs: Vec<PathBuf>,
    extra: serde_json::Map<String, Value>,
}

impl RunLog {
    pub fn new(command: &str) -> Self {
        let now = Instant::now();
        RunLog {
            command: command.to_string(),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            start: now,
            last: now,
            timings: Vec::new(),
            outputs: Vec::new(),
            extra: Default::default(),
        }
    }

    /// Close the current phase under `name`.
    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.push(Timing {
            phase: name.to_string(),
            ms: (now - self.last).as_secs_f64() * 1e3,
        });
        self.last = now;
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.extra.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn finish(
        self,
        out_dir: &Path,
        config: &impl Serialize,
        seed: u64,
    ) -> Result<(), CliError> {
        let run = serde_json::json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "capkit_version": capkit::VERSION,
            "seed": seed,
            "config": config,
            "argv": std::env::args().collect::<Vec<_>>(),
            "started_unix_s": self.started_unix_s,
            "elapsed_ms": self.start.elapsed().as_secs_f64() * 1e3,
            "timings": self.timings,
            "outputs": self.outputs,
            "details": self.extra,
        });
        write_json(&out_dir.join("run.json"), &run)
    }
}
