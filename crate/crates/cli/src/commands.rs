use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use capkit::corpus::{parse_record, stream_manifest, CorpusError, DatasetManifest, StreamOptions};
use capkit::exec::DEFAULT_CHUNK;
use capkit::format::{default_specs, FormatSpecs, ValidationReport, Validator};
use capkit::hallucination::{capscore, chair, CapScoreReport, ChairReport, ObjectVocabulary};
use capkit::mixer::{mix_corpus, ratio_dir_name, sweep, MixOptions};
use capkit::providers::GroundedMockVqa;
use capkit::providers::{
    quality_post_process, recaption_batch, Client, MockCore, PromptTemplates, ProviderEndpoint,
    QualityVerdict, RemoteAssertions, RemoteVqa, VqaProvider,
};
use capkit::richness::{
    ana, entity_diversity, AssertionExtractor, HeuristicEntities, Histogram, RuleBasedAssertions,
};
use capkit::tokenize::count_tokens;
use capkit::{CaptionFormat, CaptionRecord, Exec, Scheme};
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::{write_json, CliError, RunLog};

/// Opened input corpus plus the streaming policy.
pub struct Input {
    pub manifest: DatasetManifest,
    pub opts: StreamOptions,
}

type Records<'a> = dyn Iterator<Item = CaptionRecord> + Send + 'a;

impl Input {
    pub fn open(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Input {
            manifest: DatasetManifest::open(cfg.manifest()?)?,
            opts: StreamOptions {
                strict: cfg.strict(),
            },
        })
    }

    /// Run `f` over one pass of the records. Malformed lines are counted
    /// (lenient) or abort the command (strict); other read errors always abort.
    pub fn scan<R>(&self, f: impl FnOnce(&mut Records<'_>) -> R) -> Result<(R, u64), CliError> {
        let seen: Arc<Mutex<(u64, Option<CorpusError>)>> = Default::default();
        let sink = seen.clone();
        let mut it = stream_manifest(&self.manifest, self.opts)?.records(move |e| {
            let mut g = sink.lock().expect("error sink");
            if e.is_record_error() {
                g.0 += 1;
            }
            if g.1.is_none() && (self.opts.strict || !e.is_record_error()) {
                g.1 = Some(e);
            }
        });
        let r = f(&mut it);
        drop(it);
        let (malformed, first) = std::mem::take(&mut *seen.lock().expect("error sink"));
        if let Some(e) = first {
            return Err(e.into());
        }
        if malformed > 0 {
            eprintln!("warning: skipped {malformed} malformed line(s)");
        }
        Ok((r, malformed))
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn validator(cfg: &RunConfig) -> Result<Validator, CliError> {
    let specs: FormatSpecs = default_specs().with_overrides(&cfg.specs)?;
    Ok(Validator::new(specs, Scheme::by_name(cfg.tokenizer())?))
}

fn templates(cfg: &RunConfig) -> PromptTemplates {
    let mut t = PromptTemplates::default();
    if let Some(user) = &cfg.templates {
        t.caption.extend(user.caption.clone());
        t.assertion = user.assertion.clone();
        t.vqa = user.vqa.clone();
    }
    t
}

#[derive(Serialize)]
struct FormatStats {
    captions: u64,
    missing: u64,
    out_of_range: u64,
    /// Share of binned captions inside the format's token band.
    within_band: Option<f64>,
    histogram_csv: String,
}

pub fn stats(cfg: &RunConfig, mock: bool, exec: Exec, log: &mut RunLog) -> Result<(), CliError> {
    let input = Input::open(cfg)?;
    let out = cfg.out();
    create_dir(&out)?;
    let v = validator(cfg)?;
    let formats = cfg.formats_or(&CaptionFormat::ALL);
    let bins = Histogram::default_token_bins();

    let (hists, malformed) = input.scan(|it| {
        let empty = vec![bins.empty_like(); formats.len()];
        exec.fold_stream(
            it,
            DEFAULT_CHUNK,
            || empty.clone(),
            |r| {
                let mut h = empty.clone();
                for (i, f) in formats.iter().enumerate() {
                    match r.text(*f) {
                        Some(t) => h[i].record(count_tokens(t, &v.scheme) as u64),
                        None => h[i].skipped += 1,
                    }
                }
                h
            },
            |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
        )
    })?;
    log.phase("histograms");

    let records = hists.first().map(Histogram::seen).unwrap_or(0);
    let mut per_format = BTreeMap::new();
    for (f, h) in formats.iter().zip(&hists) {
        let name = format!("hist_{}.csv", f.key());
        let path = out.join(&name);
        std::fs::write(&path, h.to_csv()).map_err(|e| CliError::io(&path, e))?;
        log.output(&path);
        let spec = v.specs.get(*f);
        let within_band = (spec.min_tokens.is_some() || spec.max_tokens.is_some()).then(|| {
            h.mass_within(
                spec.min_tokens.unwrap_or(0) as u64,
                spec.max_tokens.map(|m| m as u64).unwrap_or(u64::MAX),
            )
        });
        per_format.insert(
            *f,
            FormatStats {
                captions: h.total + h.out_of_range,
                missing: h.skipped,
                out_of_range: h.out_of_range,
                within_band,
                histogram_csv: name,
            },
        );
    }

    let sample = cfg.sample_size.unwrap_or(1000);
    let (entities, _) = input.scan(|it| {
        entity_diversity(
            it,
            &formats,
            &HeuristicEntities,
            sample,
            cfg.seed(),
            false,
            exec,
        )
    })?;
    let entities = entities?;
    log.phase("entities");

    let remote;
    let extractor: &dyn AssertionExtractor = match endpoint_for(cfg, Role::Assert)? {
        Some(ep) if !mock => {
            remote = Client::http(ep)?;
            &RemoteAssertions::new(&remote, &templates(cfg)) as &dyn AssertionExtractor
        }
        _ => &RuleBasedAssertions,
    };
    // per-format ANA, restricted to the requested formats
    let mut ana_reports = BTreeMap::new();
    for f in &formats {
        let (r, _) = input.scan(|it| ana(it, Some(*f), extractor, exec))?;
        if let Some(msg) = &r.failure {
            return Err(CliError::Provider(msg.clone()));
        }
        ana_reports.insert(*f, r.per_format[f].clone());
    }
    log.phase("ana");

    let report = serde_json::json!({
        "records": records,
        "malformed_lines": malformed,
        "tokenizer": cfg.tokenizer(),
        "formats": formats,
        "per_format": per_format,
        "entities": entities,
        "ana": ana_reports,
    });
    let path = out.join("stats.json");
    write_json(&path, &report)?;
    log.output(path);
    Ok(())
}

#[derive(Default, Serialize)]
struct ValidationCell {
    checked: u64,
    passed: u64,
    failed: u64,
    missing: u64,
    violations: BTreeMap<String, u64>,
}

#[derive(Serialize)]
struct Flagged<'a> {
    id: &'a str,
    #[serde(flatten)]
    report: &'a ValidationReport,
}

pub fn validate(cfg: &RunConfig, log: &mut RunLog) -> Result<bool, CliError> {
    let input = Input::open(cfg)?;
    let out = cfg.out();
    create_dir(&out)?;
    let v = validator(cfg)?;
    let formats = cfg.formats_or(&CaptionFormat::SYNTHETIC);
    let flagged_path = out.join("violations.jsonl");
    let mut flagged =
        BufWriter::new(File::create(&flagged_path).map_err(|e| CliError::io(&flagged_path, e))?);
    let mut cells: BTreeMap<CaptionFormat, ValidationCell> = formats
        .iter()
        .map(|f| (*f, ValidationCell::default()))
        .collect();

    let (res, malformed) = input.scan(|it| -> Result<(), CliError> {
        for r in it {
            for f in &formats {
                let cell = cells.get_mut(f).expect("cell per format");
                let Some(text) = r.text(*f) else {
                    cell.missing += 1;
                    continue;
                };
                let report = match v.validate(text, *f, r.alt_text.as_deref()) {
                    Ok(rep) => rep,
                    Err(_) => {
                        cell.missing += 1;
                        continue;
                    }
                };
                cell.checked += 1;
                if report.pass {
                    cell.passed += 1;
                    continue;
                }
                cell.failed += 1;
                for viol in &report.violations {
                    *cell.violations.entry(viol.name().to_string()).or_insert(0) += 1;
                }
                serde_json::to_writer(
                    &mut flagged,
                    &Flagged {
                        id: &r.id,
                        report: &report,
                    },
                )
                .map_err(|e| CliError::Io(e.to_string()))?;
                flagged
                    .write_all(b"\n")
                    .map_err(|e| CliError::io(&flagged_path, e))?;
            }
        }
        Ok(())
    })?;
    res?;
    flagged
        .flush()
        .map_err(|e| CliError::io(&flagged_path, e))?;
    log.phase("validate");
    log.output(&flagged_path);

    let all_pass = cells.values().all(|c| c.failed == 0);
    let path = out.join("validation.json");
    write_json(
        &path,
        &serde_json::json!({
            "tokenizer": cfg.tokenizer(),
            "specs": formats.iter().map(|f| v.specs.get(*f)).collect::<Vec<_>>(),
            "malformed_lines": malformed,
            "per_format": cells,
        }),
    )?;
    log.output(path);
    Ok(all_pass)
}

fn mix_options(cfg: &RunConfig, exec: Exec, shard_size: Option<u64>) -> MixOptions {
    MixOptions {
        stream: StreamOptions {
            strict: cfg.strict(),
        },
        exec,
        max_records_per_shard: shard_size.unwrap_or(100_000),
    }
}

pub fn mix(
    cfg: &RunConfig,
    exec: Exec,
    shard_size: Option<u64>,
    log: &mut RunLog,
) -> Result<(), CliError> {
    let manifest = DatasetManifest::open(cfg.manifest()?)?;
    let recipe = cfg.recipe.clone().unwrap_or_default();
    let out = cfg.out();
    let (m, report) = mix_corpus(
        &manifest,
        &recipe,
        &out,
        &mix_options(cfg, exec, shard_size),
    )?;
    log.phase("mix");
    log.output(out.join("manifest.json"));
    log.output(out.join("mix_report.json"));
    log.note("emitted", report.emitted);
    log.note("shards", m.shards.len());
    Ok(())
}

pub fn run_sweep(
    cfg: &RunConfig,
    exec: Exec,
    shard_size: Option<u64>,
    log: &mut RunLog,
) -> Result<(), CliError> {
    let manifest = DatasetManifest::open(cfg.manifest()?)?;
    let recipe = cfg.recipe.clone().unwrap_or_default();
    let ratios = cfg
        .ratios
        .clone()
        .ok_or_else(|| CliError::Config("sweep needs --ratios".into()))?;
    let out = cfg.out();
    let reports = sweep(
        &manifest,
        &recipe,
        &ratios,
        &out,
        &mix_options(cfg, exec, shard_size),
    )?;
    log.phase("sweep");
    let summary: Vec<_> = reports
        .iter()
        .map(|(p, r)| {
            serde_json::json!({
                "ratio": p,
                "dir": ratio_dir_name(*p),
                "emitted": r.emitted,
                "observed_alt_fraction": r.observed_alt_fraction,
                "per_source": r.per_source,
            })
        })
        .collect();
    let path = out.join("sweep.json");
    write_json(&path, &summary)?;
    log.output(path);
    Ok(())
}

pub fn run_chair(cfg: &RunConfig, exec: Exec, log: &mut RunLog) -> Result<(), CliError> {
    let input = Input::open(cfg)?;
    let out = cfg.out();
    create_dir(&out)?;
    let vocab = match &cfg.vocab {
        Some(p) => ObjectVocabulary::load(p)?,
        None => ObjectVocabulary::coco(),
    };
    let formats = cfg.formats_or(&[CaptionFormat::Dsc]);
    let mut reports: BTreeMap<CaptionFormat, ChairReport> = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for f in &formats {
        let (r, _) = input.scan(|it| chair(it, *f, &vocab, exec))?;
        match r {
            Ok(rep) => {
                reports.insert(*f, rep);
            }
            Err(e) => {
                errors.insert(*f, e.to_string());
            }
        }
    }
    log.phase("chair");
    let path = out.join("chair.json");
    write_json(
        &path,
        &serde_json::json!({
            "vocab": cfg.vocab.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "coco".into()),
            "reports": reports,
            "errors": errors,
        }),
    )?;
    log.output(path);
    if reports.is_empty() {
        return Err(CliError::Config(
            errors
                .into_values()
                .next()
                .unwrap_or_else(|| "no formats requested".into()),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Role {
    Caption,
    Assert,
    Vqa,
}

/// Endpoint for a role, validated.
fn endpoint_for(cfg: &RunConfig, role: Role) -> Result<Option<ProviderEndpoint>, CliError> {
    let ep = match role {
        Role::Caption => cfg.endpoints.caption.clone(),
        Role::Assert => cfg.endpoints.assert.clone(),
        Role::Vqa => cfg.endpoints.vqa.clone(),
    };
    if let Some(ep) = &ep {
        ep.check()?;
    }
    Ok(ep)
}

pub fn run_capscore(
    cfg: &RunConfig,
    mock: bool,
    detail: bool,
    exec: Exec,
    log: &mut RunLog,
) -> Result<(), CliError> {
    let input = Input::open(cfg)?;
    let out = cfg.out();
    create_dir(&out)?;
    let formats = cfg.formats_or(&[CaptionFormat::Dsc]);
    let policy = cfg.failure_policy.unwrap_or_default();
    let t = templates(cfg);

    let clients;
    let (extractor, vqa): (Box<dyn AssertionExtractor + '_>, Box<dyn VqaProvider + '_>) = if mock {
        (Box::new(RuleBasedAssertions), Box::new(GroundedMockVqa))
    } else {
        let (Some(a), Some(q)) = (
            endpoint_for(cfg, Role::Assert)?,
            endpoint_for(cfg, Role::Vqa)?,
        ) else {
            return Err(CliError::Config(
                "capscore needs --mock, --endpoint or [endpoints.assert] and [endpoints.vqa]"
                    .into(),
            ));
        };
        clients = (Client::http(a)?, Client::http(q)?);
        (
            Box::new(RemoteAssertions::new(&clients.0, &t)),
            Box::new(RemoteVqa::new(&clients.1, &t)),
        )
    };

    let mut reports: BTreeMap<CaptionFormat, CapScoreReport> = BTreeMap::new();
    for f in &formats {
        let (r, _) = input.scan(|it| {
            capscore(
                it,
                *f,
                extractor.as_ref(),
                vqa.as_ref(),
                policy,
                detail,
                exec,
            )
        })?;
        reports.insert(*f, r?);
    }
    log.phase("capscore");
    let path = out.join("capscore.json");
    write_json(
        &path,
        &serde_json::json!({ "mock": mock, "failure_policy": policy, "reports": reports }),
    )?;
    log.output(path);
    Ok(())
}

/// Ids already written to a recaption output file.
fn done_ids(path: &Path) -> Result<HashSet<String>, CliError> {
    let mut done = HashSet::new();
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(CliError::io(path, e)),
    };
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if let Ok(r) = parse_record(&line) {
            done.insert(r.id);
        }
    }
    Ok(done)
}

fn append(path: &Path) -> Result<BufWriter<File>, CliError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Rejection<'a> {
    id: &'a str,
    format: CaptionFormat,
    reason: String,
}

pub fn recaption(
    cfg: &RunConfig,
    mock: bool,
    skip_quality: bool,
    log: &mut RunLog,
) -> Result<(), CliError> {
    let input = Input::open(cfg)?;
    let out = cfg.out();
    create_dir(&out)?;
    let formats = cfg.formats_or(&[CaptionFormat::Ssc]);
    if formats.contains(&CaptionFormat::AltText) {
        return Err(CliError::Config(
            "alt text is an input, not a recaption target".into(),
        ));
    }
    let client = if mock {
        let ep =
            endpoint_for(cfg, Role::Caption)?.unwrap_or_else(|| ProviderEndpoint::new("mock://"));
        Client::new(ep, Arc::new(MockCore::new()))?
    } else {
        let ep = endpoint_for(cfg, Role::Caption)?.ok_or_else(|| {
            CliError::Config("recaption needs --mock, --endpoint or [endpoints.caption]".into())
        })?;
        Client::http(ep)?
    };
    let t = templates(cfg);
    let v = validator(cfg)?;
    let quality = cfg.quality.clone().unwrap_or_default();
    let mut summaries = BTreeMap::new();
    let mut provider_failures = 0;

    for f in &formats {
        let out_path: PathBuf = out.join(format!("recaption-{}.jsonl", f.key()));
        let rej_path: PathBuf = out.join(format!("recaption-{}.rejects.jsonl", f.key()));
        let done = done_ids(&out_path)?;
        let mut accepted = append(&out_path)?;
        let mut rejects = append(&rej_path)?;
        // records are needed again when writing accepted captions, keyed by id
        let mut originals: BTreeMap<String, CaptionRecord> = BTreeMap::new();
        let mut io_error: Option<CliError> = None;
        let mut quality_rejects = 0u64;

        let (summary, _) = input.scan(|it| {
            let (tx, rx) = std::sync::mpsc::channel::<CaptionRecord>();
            let done = &done;
            let feed = it.inspect(move |r| {
                if !done.contains(&r.id) {
                    let _ = tx.send(r.clone());
                }
            });
            recaption_batch(feed, *f, &client, &t, done, |o| {
                while let Ok(r) = rx.try_recv() {
                    originals.insert(r.id.clone(), r);
                }
                let Some(rec) = originals.remove(&o.id) else {
                    return;
                };
                let verdict = match o.result {
                    Ok(text) if skip_quality => QualityVerdict::Accept(text),
                    Ok(text) => {
                        quality_post_process(&text, *f, &v, &quality, rec.alt_text.as_deref(), None)
                    }
                    Err(e) => {
                        let line = Rejection {
                            id: &o.id,
                            format: *f,
                            reason: e.to_string(),
                        };
                        write_line(&mut rejects, &line, &rej_path, &mut io_error);
                        return;
                    }
                };
                match verdict {
                    QualityVerdict::Accept(text) => {
                        let rec = rec.with_caption(*f, text);
                        write_line(&mut accepted, &rec, &out_path, &mut io_error);
                    }
                    QualityVerdict::Reject(reason) => {
                        quality_rejects += 1;
                        let line = Rejection {
                            id: &o.id,
                            format: *f,
                            reason: reason.to_string(),
                        };
                        write_line(&mut rejects, &line, &rej_path, &mut io_error);
                    }
                }
            })
        })?;
        accepted.flush().map_err(|e| CliError::io(&out_path, e))?;
        rejects.flush().map_err(|e| CliError::io(&rej_path, e))?;
        if let Some(e) = io_error {
            return Err(e);
        }
        provider_failures += summary.failed;
        log.output(&out_path);
        log.output(&rej_path);
        summaries.insert(
            *f,
            serde_json::json!({ "summary": summary, "quality_rejects": quality_rejects }),
        );
    }
    log.phase("recaption");
    let path = out.join("recaption_report.json");
    write_json(
        &path,
        &serde_json::json!({ "mock": mock, "formats": summaries }),
    )?;
    log.output(path);
    if provider_failures > 0 {
        return Err(CliError::Provider(format!(
            "{provider_failures} request(s) failed after retries; see the .rejects.jsonl files"
        )));
    }
    Ok(())
}

fn write_line(
    out: &mut impl Write,
    value: &impl Serialize,
    path: &Path,
    err: &mut Option<CliError>,
) {
    if err.is_some() {
        return;
    }
    let r = serde_json::to_writer(&mut *out, value)
        .map_err(|e| CliError::Io(e.to_string()))
        .and_then(|_| out.write_all(b"\n").map_err(|e| CliError::io(path, e)));
    if let Err(e) = r {
        *err = Some(e);
    }
}
