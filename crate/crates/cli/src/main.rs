//! `capkit`: curation toolkit for image-caption corpora.
//!
//! Exit codes: 0 success, 1 `validate` found violations, 2 usage or config
//! error, 3 I/O or data error, 4 provider failure.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use capkit::hallucination::FailurePolicy;
use capkit::mixer::{MissingPolicy, MixMode, MixRecipe};
use capkit::providers::ProviderEndpoint;
use capkit::{CaptionFormat, Exec};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_ratios, RunConfig};
use crate::run::{CliError, RunLog};

#[derive(Parser)]
#[command(
    name = "capkit",
    version,
    about = "Curation toolkit for image-caption corpora"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Tokenizer scheme (unicode, cased, whitespace)
    #[arg(long, global = true)]
    tokenizer: Option<String>,
    /// Comma-separated caption formats, e.g. `ssc,dsc`
    #[arg(long, global = true, visible_alias = "format")]
    formats: Option<String>,
    /// Worker threads; 1 runs sequentially
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Abort on malformed lines and verify shard checksums
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the offline mock providers
    #[arg(long, global = true)]
    mock: bool,
    /// Base URL for every provider role without its own config section
    #[arg(long, global = true)]
    endpoint: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
struct RecipeFlags {
    /// Recipe TOML file; replaces the `[recipe]` table of --config
    #[arg(long)]
    recipe: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Probability of the primary source (alt text when present)
    #[arg(long)]
    ratio: Option<f64>,
    /// Comma-separated sources, e.g. `alt,ssc`
    #[arg(long)]
    sources: Option<String>,
    /// Token budget for emitted text
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum)]
    missing_policy: Option<MissingArg>,
    #[arg(long)]
    separator: Option<String>,
    /// Records per output shard
    #[arg(long)]
    shard_size: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    RatioSample,
    Concat,
    UnionUniform,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MissingArg {
    SkipRecord,
    FallbackOtherSource,
    Error,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PolicyArg {
    Abort,
    Skip,
}

#[derive(Subcommand)]
enum Command {
    /// Token-length histograms, unique entities and ANA
    Stats {
        input: Option<PathBuf>,
        /// Records sampled for entity counts
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Check captions against their format contracts
    Validate { input: Option<PathBuf> },
    /// Materialize one training set from a mixing recipe
    Mix {
        input: Option<PathBuf>,
        #[command(flatten)]
        recipe: RecipeFlags,
    },
    /// One training set per alt ratio
    Sweep {
        input: Option<PathBuf>,
        /// Ratios as percentages (`0,20,40`) or fractions (`0,0.2,0.4`)
        #[arg(long)]
        ratios: Option<String>,
        #[command(flatten)]
        recipe: RecipeFlags,
    },
    /// Object hallucination rates against gt_objects
    Chair {
        input: Option<PathBuf>,
        /// Object vocabulary TSV (default: the 80 COCO objects)
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Share of caption assertions a VQA model confirms
    Capscore {
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Include per-record counts
        #[arg(long)]
        detail: bool,
    },
    /// Generate captions through a captioning provider
    Recaption {
        input: Option<PathBuf>,
        /// Keep provider output as is, without the quality checks
        #[arg(long)]
        skip_quality: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stats { .. } => "stats",
            Command::Validate { .. } => "validate",
            Command::Mix { .. } => "mix",
            Command::Sweep { .. } => "sweep",
            Command::Chair { .. } => "chair",
            Command::Capscore { .. } => "capscore",
            Command::Recaption { .. } => "recaption",
        }
    }

    fn input(&self) -> Option<&PathBuf> {
        match self {
            Command::Stats { input, .. }
            | Command::Validate { input }
            | Command::Mix { input, .. }
            | Command::Sweep { input, .. }
            | Command::Chair { input, .. }
            | Command::Capscore { input, .. }
            | Command::Recaption { input, .. } => input.as_ref(),
        }
    }
}

fn apply_recipe_flags(
    cfg: &mut RunConfig,
    f: &RecipeFlags,
    common: &Common,
) -> Result<(), CliError> {
    let mut r = match &f.recipe {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            MixRecipe::from_toml(&text)?
        }
        None => cfg.recipe.clone().unwrap_or_default(),
    };
    if let Some(m) = f.mode {
        r.mode = match m {
            ModeArg::RatioSample => MixMode::RatioSample,
            ModeArg::Concat => MixMode::Concat,
            ModeArg::UnionUniform => MixMode::UnionUniform,
        };
    }
    if let Some(p) = f.ratio {
        r.alt_ratio = p;
    }
    if let Some(s) = &f.sources {
        r.sources = CaptionFormat::parse_list(s)?;
    }
    if f.budget.is_some() {
        r.budget = f.budget;
    }
    if let Some(m) = f.missing_policy {
        r.missing_policy = match m {
            MissingArg::SkipRecord => MissingPolicy::SkipRecord,
            MissingArg::FallbackOtherSource => MissingPolicy::FallbackOtherSource,
            MissingArg::Error => MissingPolicy::Error,
        };
    }
    if let Some(s) = &f.separator {
        r.separator = s.clone();
    }
    if let Some(s) = common.seed.or(cfg.seed) {
        r.seed = s;
    }
    if let Some(t) = common.tokenizer.as_ref().or(cfg.tokenizer.as_ref()) {
        r.tokenizer = t.clone();
    }
    cfg.seed = Some(r.seed);
    cfg.recipe = Some(r);
    Ok(())
}

/// File config overlaid by flags; the result is what `run.json` echoes.
fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(i) = cli.command.input() {
        cfg.manifest = Some(i.clone());
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if c.tokenizer.is_some() {
        cfg.tokenizer = c.tokenizer.clone();
    }
    if let Some(f) = &c.formats {
        cfg.formats = Some(CaptionFormat::parse_list(f)?);
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    if c.strict {
        cfg.strict = Some(true);
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(url) = &c.endpoint {
        let e = &mut cfg.endpoints;
        for slot in [&mut e.caption, &mut e.assert, &mut e.vqa] {
            slot.get_or_insert_with(|| ProviderEndpoint::new(url.clone()));
        }
    }
    match &cli.command {
        Command::Stats { sample, .. } if sample.is_some() => cfg.sample_size = *sample,
        Command::Mix { recipe, .. } => apply_recipe_flags(&mut cfg, recipe, c)?,
        Command::Sweep { ratios, recipe, .. } => {
            apply_recipe_flags(&mut cfg, recipe, c)?;
            if let Some(r) = ratios {
                cfg.ratios = Some(parse_ratios(r)?);
            }
        }
        Command::Chair { vocab, .. } if vocab.is_some() => cfg.vocab = vocab.clone(),
        Command::Capscore {
            policy: Some(p), ..
        } => {
            cfg.failure_policy = Some(match p {
                PolicyArg::Abort => FailurePolicy::Abort,
                PolicyArg::Skip => FailurePolicy::Skip,
            })
        }
        _ => {}
    }
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Result<bool, CliError> {
    let workers = cfg.workers();
    let exec = Exec::from_workers(workers);
    let mut log = RunLog::new(cli.command.name());
    let mock = cli.common.mock;
    let ok = exec.install(workers, || -> Result<bool, CliError> {
        match &cli.command {
            Command::Stats { .. } => commands::stats(cfg, mock, exec, &mut log)?,
            Command::Validate { .. } => return commands::validate(cfg, &mut log),
            Command::Mix { recipe, .. } => commands::mix(cfg, exec, recipe.shard_size, &mut log)?,
            Command::Sweep { recipe, .. } => {
                commands::run_sweep(cfg, exec, recipe.shard_size, &mut log)?
            }
            Command::Chair { .. } => commands::run_chair(cfg, exec, &mut log)?,
            Command::Capscore { detail, .. } => {
                commands::run_capscore(cfg, mock, *detail, exec, &mut log)?
            }
            Command::Recaption { skip_quality, .. } => {
                commands::recaption(cfg, mock, *skip_quality, &mut log)?
            }
        }
        Ok(true)
    });
    // run.json is written even when the command failed part-way
    let out = cfg.out();
    if out.is_dir() {
        log.note("workers", workers);
        log.note("error", ok.as_ref().err().map(ToString::to_string));
        log.finish(&out, cfg, cfg.seed())?;
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| execute(&cli, &cfg));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
