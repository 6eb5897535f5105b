//! Training-set materialization under caption mixing recipes.
//!
//! Every per-record decision is a function of the record id and the recipe
//! seed only, so outputs do not depend on input order, shard layout or the
//! number of workers, and sweeps over `alt_ratio` are nested: a record that
//! gets alt text at ratio `p` also gets it at every ratio above `p`.

mod recipe;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use recipe::{
    assign_source, truncate_for_budget, MissingPolicy, MixMode, MixOutcome, MixRecipe, Mixer,
    TrainingPair,
};

use crate::corpus::{
    stream_shard, CorpusError, DatasetManifest, Shard, ShardWriter, StreamOptions,
};
use crate::exec::Exec;
use crate::format::CaptionFormat;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MixError {
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("record `{id}` has no `{format}` caption")]
    MissingSource { id: String, format: CaptionFormat },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixOptions {
    pub stream: StreamOptions,
    pub exec: Exec,
    pub max_records_per_shard: u64,
}

impl Default for MixOptions {
    fn default() -> Self {
        MixOptions {
            stream: StreamOptions::default(),
            exec: Exec::default(),
            max_records_per_shard: 100_000,
        }
    }
}

/// Totals of one mixing run. `input_records` equals `emitted +
/// skipped_missing`; malformed lines are counted apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub recipe: MixRecipe,
    pub seed: u64,
    pub input_records: u64,
    pub malformed_lines: u64,
    pub emitted: u64,
    pub skipped_missing: u64,
    /// Emitted from a source other than the one first chosen, or (concat)
    /// with some sources absent.
    pub fallbacks: u64,
    pub truncated: u64,
    pub per_source: BTreeMap<String, u64>,
    /// Share of emitted records taken from the primary source; ratio
    /// sampling only.
    pub observed_alt_fraction: Option<f64>,
}

#[derive(Debug, Default)]
struct Tally {
    input: u64,
    malformed: u64,
    emitted: u64,
    skipped: u64,
    fallbacks: u64,
    truncated: u64,
    per_source: BTreeMap<String, u64>,
}

impl Tally {
    fn merge(&mut self, o: Tally) {
        self.input += o.input;
        self.malformed += o.malformed;
        self.emitted += o.emitted;
        self.skipped += o.skipped;
        self.fallbacks += o.fallbacks;
        self.truncated += o.truncated;
        for (k, v) in o.per_source {
            *self.per_source.entry(k).or_insert(0) += v;
        }
    }

    fn into_report(self, recipe: &MixRecipe) -> MixReport {
        let observed = (recipe.mode == MixMode::RatioSample).then(|| {
            let primary = recipe.ratio_pair().0.key();
            let n = self.per_source.get(primary).copied().unwrap_or(0);
            if self.emitted == 0 {
                0.0
            } else {
                n as f64 / self.emitted as f64
            }
        });
        MixReport {
            recipe: recipe.clone(),
            seed: recipe.seed,
            input_records: self.input,
            malformed_lines: self.malformed,
            emitted: self.emitted,
            skipped_missing: self.skipped,
            fallbacks: self.fallbacks,
            truncated: self.truncated,
            per_source: self.per_source,
            observed_alt_fraction: observed,
        }
    }
}

fn mix_shard(
    manifest: &DatasetManifest,
    index: usize,
    mixer: &Mixer,
    out_dir: &Path,
    opts: &MixOptions,
) -> Result<(Vec<Shard>, Tally), MixError> {
    let mut t = Tally::default();
    let prefix = out_dir.join(format!("mixed-{index:05}"));
    let mut w = ShardWriter::<TrainingPair>::new(prefix, opts.max_records_per_shard)?;
    for item in stream_shard(manifest, index, opts.stream)? {
        let rec = match item {
            Ok(r) => r,
            Err(e) if e.is_record_error() && !opts.stream.strict => {
                t.malformed += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        t.input += 1;
        match mixer.mix(&rec)? {
            MixOutcome::Skip => t.skipped += 1,
            MixOutcome::Emit { pair, fallback } => {
                t.emitted += 1;
                t.fallbacks += u64::from(fallback);
                t.truncated += u64::from(pair.truncated);
                *t.per_source.entry(pair.source.clone()).or_insert(0) += 1;
                w.push(&pair)?;
            }
        }
    }
    Ok((w.finish()?, t))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), MixError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CorpusError::Serialization(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| {
        MixError::Corpus(CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

/// Apply `recipe` to every record of `manifest`, writing training shards,
/// `manifest.json` and `mix_report.json` into `out_dir`.
///
/// Input shards are processed in parallel; input shard `k` becomes output
/// shards `mixed-{k}-*.jsonl`.
pub fn mix_corpus(
    manifest: &DatasetManifest,
    recipe: &MixRecipe,
    out_dir: impl AsRef<Path>,
    opts: &MixOptions,
) -> Result<(DatasetManifest, MixReport), MixError> {
    let out_dir = out_dir.as_ref();
    let mixer = Mixer::new(recipe.clone())?;
    std::fs::create_dir_all(out_dir).map_err(|e| CorpusError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let indices: Vec<usize> = (0..manifest.shards.len()).collect();
    let results = opts
        .exec
        .map(&indices, |&k| mix_shard(manifest, k, &mixer, out_dir, opts));
    let mut shards = Vec::new();
    let mut tally = Tally::default();
    for r in results {
        let (s, t) = r?;
        shards.extend(s);
        tally.merge(t);
    }
    let out = DatasetManifest::new(shards)?;
    out.save(out_dir.join("manifest.json"))?;
    let report = tally.into_report(recipe);
    write_json(&out_dir.join("mix_report.json"), &report)?;
    Ok((out, report))
}

/// Directory name of a sweep variant: the ratio as a whole percentage.
pub fn ratio_dir_name(p: f64) -> String {
    format!("ratio_{:03}", (p * 100.0).round() as u32)
}

/// One ratio-sample dataset per entry of `ratios`, all sharing the base
/// recipe's seed, under `out_root/ratio_XXX/`.
pub fn sweep(
    manifest: &DatasetManifest,
    base: &MixRecipe,
    ratios: &[f64],
    out_root: impl AsRef<Path>,
    opts: &MixOptions,
) -> Result<Vec<(f64, MixReport)>, MixError> {
    if ratios.is_empty() {
        return Err(MixError::InvalidRecipe(
            "sweep needs at least one ratio".into(),
        ));
    }
    if base.mode != MixMode::RatioSample {
        return Err(MixError::InvalidRecipe(
            "sweeps vary alt_ratio and need ratio_sample mode".into(),
        ));
    }
    let mut dirs: Vec<(f64, PathBuf)> = Vec::new();
    for &p in ratios {
        let recipe = MixRecipe {
            alt_ratio: p,
            ..base.clone()
        };
        recipe.check()?;
        let dir = out_root.as_ref().join(ratio_dir_name(p));
        if dirs.iter().any(|(_, d)| d == &dir) {
            return Err(MixError::InvalidRecipe(format!(
                "ratios collide on directory {}",
                dir.display()
            )));
        }
        dirs.push((p, dir));
    }
    dirs.into_iter()
        .map(|(p, dir)| {
            let recipe = MixRecipe {
                alt_ratio: p,
                ..base.clone()
            };
            mix_corpus(manifest, &recipe, dir, opts).map(|(_, r)| (p, r))
        })
        .collect()
}
