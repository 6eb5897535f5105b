//! Run configuration: a TOML file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use capkit::format::SpecOverride;
use capkit::hallucination::FailurePolicy;
use capkit::mixer::MixRecipe;
use capkit::providers::{PromptTemplates, ProviderEndpoint, QualityConfig};
use capkit::CaptionFormat;
use serde::{Deserialize, Serialize};

use crate::run::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub caption: Option<ProviderEndpoint>,
    pub assert: Option<ProviderEndpoint>,
    pub vqa: Option<ProviderEndpoint>,
}

/// Everything a run can be configured with. Every field is optional in the
/// file; flags given on the command line replace file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tokenizer: Option<String>,
    pub formats: Option<Vec<CaptionFormat>>,
    pub workers: Option<usize>,
    pub strict: Option<bool>,
    pub seed: Option<u64>,
    pub sample_size: Option<usize>,
    pub vocab: Option<PathBuf>,
    pub failure_policy: Option<FailurePolicy>,
    pub ratios: Option<Vec<f64>>,
    pub specs: BTreeMap<CaptionFormat, SpecOverride>,
    pub recipe: Option<MixRecipe>,
    pub endpoints: Endpoints,
    pub templates: Option<PromptTemplates>,
    pub quality: Option<QualityConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn manifest(&self) -> Result<&Path, CliError> {
        self.manifest.as_deref().ok_or_else(|| {
            CliError::Config(
                "no input corpus given (positional INPUT or `manifest` in config)".into(),
            )
        })
    }

    pub fn out(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("capkit-out"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn strict(&self) -> bool {
        self.strict.unwrap_or(false)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }

    pub fn tokenizer(&self) -> &str {
        self.tokenizer
            .as_deref()
            .unwrap_or(capkit::tokenize::DEFAULT_SCHEME)
    }

    pub fn formats_or(&self, default: &[CaptionFormat]) -> Vec<CaptionFormat> {
        self.formats.clone().unwrap_or_else(|| default.to_vec())
    }
}

/// Sweep ratios are percentages (`0,20,40`) unless every value is at most 1
/// (`0,0.2,0.4`), in which case they are fractions.
pub fn parse_ratios(s: &str) -> Result<Vec<f64>, CliError> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad ratio `{v}`")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config("no ratios given".into()));
    }
    let percent = values.iter().any(|v| *v > 1.0);
    Ok(values
        .into_iter()
        .map(|v| if percent { v / 100.0 } else { v })
        .collect())
}
