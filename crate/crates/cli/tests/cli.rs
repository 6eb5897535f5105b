use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn capkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capkit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn capkit")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = capkit(dir, args);
    assert!(
        out.status.success(),
        "capkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write_jsonl(path: &Path, records: &[Value]) {
    let body: String = records.iter().map(|r| format!("{r}\n")).collect();
    fs::write(path, body).unwrap();
}

fn corpus(n: usize) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let recs: Vec<Value> = (0..n)
        .map(|i| {
            json!({
                "id": format!("r{i:04}"),
                "image_ref": format!("img/{i}.jpg"),
                "alt_text": format!("Photo {i} from Paris"),
                "captions": {
                    "ssc": "A dog sits on a couch.",
                    "dsc": "A brown dog sits on a red couch next to a cat."
                },
                "gt_objects": ["dog", "couch", "cat"]
            })
        })
        .collect();
    let path = dir.path().join("corpus.jsonl");
    write_jsonl(&path, &recs);
    (dir, path)
}

#[test]
fn stats_writes_histograms_and_totals() {
    let (dir, _) = corpus(25);
    ok(
        dir.path(),
        &["stats", "corpus.jsonl", "-o", "out", "--mock"],
    );
    let s = read_json(dir.path().join("out/stats.json"));
    assert_eq!(s["records"], 25);
    assert_eq!(s["malformed_lines"], 0);
    assert_eq!(s["per_format"]["ssc"]["captions"], 25);
    assert_eq!(s["per_format"]["afc"]["missing"], 25);
    for f in ["alt", "ssc", "dsc", "dscplus", "afc"] {
        assert!(dir.path().join(format!("out/hist_{f}.csv")).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("out/hist_ssc.csv")).unwrap();
    let total: u64 = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 25);
    let run = read_json(dir.path().join("out/run.json"));
    assert_eq!(run["command"], "stats");
    assert!(run["timings"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn formats_flag_restricts_outputs() {
    let (dir, _) = corpus(5);
    ok(
        dir.path(),
        &[
            "stats",
            "corpus.jsonl",
            "-o",
            "out",
            "--mock",
            "--formats",
            "ssc",
        ],
    );
    assert!(dir.path().join("out/hist_ssc.csv").exists());
    assert!(!dir.path().join("out/hist_dsc.csv").exists());
    let s = read_json(dir.path().join("out/stats.json"));
    assert!(s["per_format"].get("dsc").is_none());
}

#[test]
fn malformed_lines_are_counted_unless_strict() {
    let (dir, path) = corpus(4);
    let mut body = fs::read_to_string(&path).unwrap();
    body.push_str("{not json\n");
    fs::write(&path, body).unwrap();
    ok(
        dir.path(),
        &["stats", "corpus.jsonl", "-o", "out", "--mock"],
    );
    assert_eq!(
        read_json(dir.path().join("out/stats.json"))["malformed_lines"],
        1
    );
    let out = capkit(
        dir.path(),
        &["stats", "corpus.jsonl", "-o", "out2", "--strict", "--mock"],
    );
    assert_eq!(out.status.code(), Some(3));
}

fn mixed_lines(dir: &Path) -> Vec<Value> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    files
        .iter()
        .flat_map(|f| {
            fs::read_to_string(f)
                .unwrap()
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect::<Vec<Value>>()
        })
        .collect()
}

#[test]
fn mix_ratio_one_is_all_alt_text() {
    let (dir, _) = corpus(200);
    ok(
        dir.path(),
        &[
            "mix",
            "corpus.jsonl",
            "-o",
            "m",
            "--ratio",
            "1.0",
            "--sources",
            "alt,ssc",
        ],
    );
    let lines = mixed_lines(&dir.path().join("m"));
    assert_eq!(lines.len(), 200);
    assert!(lines.iter().all(|l| l["source"] == "alt"));
    ok(
        dir.path(),
        &[
            "mix",
            "corpus.jsonl",
            "-o",
            "z",
            "--ratio",
            "0",
            "--sources",
            "alt,ssc",
        ],
    );
    assert!(mixed_lines(&dir.path().join("z"))
        .iter()
        .all(|l| l["source"] == "ssc"));
}

#[test]
fn mix_reruns_are_byte_identical_across_worker_counts() {
    let (dir, _) = corpus(300);
    let args = |o: &'static str, w: &'static str| {
        vec![
            "mix",
            "corpus.jsonl",
            "-o",
            o,
            "--ratio",
            "0.4",
            "--seed",
            "11",
            "--workers",
            w,
            "--shard-size",
            "70",
        ]
    };
    ok(dir.path(), &args("a", "4"));
    ok(dir.path(), &args("b", "4"));
    ok(dir.path(), &args("c", "1"));
    let names = |d: &str| {
        let mut v: Vec<String> = fs::read_dir(dir.path().join(d))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".jsonl"))
            .collect();
        v.sort();
        v
    };
    assert_eq!(names("a").len(), 5);
    assert_eq!(names("a"), names("b"));
    assert_eq!(names("a"), names("c"));
    for n in names("a") {
        let a = fs::read(dir.path().join("a").join(&n)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(&n)).unwrap(), "{n}");
        assert_eq!(a, fs::read(dir.path().join("c").join(&n)).unwrap(), "{n}");
    }
    let m = read_json(dir.path().join("a/manifest.json"));
    let total: u64 = m["shards"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["record_count"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 300);
}

#[test]
fn sweep_makes_one_directory_per_ratio() {
    let (dir, _) = corpus(100);
    ok(
        dir.path(),
        &[
            "sweep",
            "corpus.jsonl",
            "-o",
            "sw",
            "--ratios",
            "0,20,40,60,80,100",
        ],
    );
    let sweep = read_json(dir.path().join("sw/sweep.json"));
    let entries = sweep.as_array().unwrap();
    assert_eq!(entries.len(), 6);
    for e in entries {
        let d = dir.path().join("sw").join(e["dir"].as_str().unwrap());
        assert!(d.join("manifest.json").exists());
        assert_eq!(mixed_lines(&d).len(), 100);
    }
    assert_eq!(entries[0]["observed_alt_fraction"], 0.0);
    assert_eq!(entries[5]["observed_alt_fraction"], 1.0);
}

#[test]
fn validate_flags_long_dsc() {
    let dir = tempfile::tempdir().unwrap();
    let long = vec!["word"; 80].join(" ") + ".";
    let ok_dsc = vec!["word"; 40].join(" ") + ".";
    write_jsonl(
        &dir.path().join("c.jsonl"),
        &[
            json!({"id": "long", "image_ref": "a", "captions": {"dsc": long}}),
            json!({"id": "fine", "image_ref": "b", "captions": {"dsc": ok_dsc}}),
        ],
    );
    let out = capkit(
        dir.path(),
        &["validate", "c.jsonl", "-o", "v", "--formats", "dsc"],
    );
    assert_eq!(out.status.code(), Some(1));
    let lines: Vec<Value> = fs::read_to_string(dir.path().join("v/violations.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["id"], "long");
    assert_eq!(lines[0]["violations"][0]["constraint"], "max_tokens");
    assert_eq!(lines[0]["tokens"], 81);
}

#[test]
fn chair_matches_hand_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_jsonl(
        &dir.path().join("c.jsonl"),
        &[
            json!({"id": "a", "image_ref": "a", "captions": {"dsc": "A dog on a couch. A pizza is here."}, "gt_objects": ["dog", "couch"]}),
            json!({"id": "b", "image_ref": "b", "captions": {"dsc": "Two cats."}, "gt_objects": ["cat"]}),
            json!({"id": "c", "image_ref": "c", "captions": {"dsc": "A horse."}}),
        ],
    );
    ok(dir.path(), &["chair", "c.jsonl", "-o", "ch"]);
    let r = &read_json(dir.path().join("ch/chair.json"))["reports"]["dsc"];
    // mentions: dog, couch, pizza | cat; hallucinated: pizza
    let (mentioned, hallucinated, sentences, flagged) = (4.0, 1.0, 3.0, 1.0);
    assert_eq!(r["mentioned_instances"], 4);
    assert_eq!(r["skipped_no_gt"], 1);
    assert_eq!(r["chair_i"].as_f64().unwrap(), hallucinated / mentioned);
    assert_eq!(r["chair_s"].as_f64().unwrap(), flagged / sentences);
}

#[test]
fn capscore_mock_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    write_jsonl(
        &dir.path().join("c.jsonl"),
        &[json!({
            "id": "a", "image_ref": "a",
            "captions": {"dsc": "There is a dog. There is a frisbee. There is a tree. There are dogs."},
            "gt_objects": ["dog", "frisbee"]
        })],
    );
    ok(dir.path(), &["capscore", "c.jsonl", "-o", "x", "--mock"]);
    ok(dir.path(), &["capscore", "c.jsonl", "-o", "y", "--mock"]);
    let a = fs::read(dir.path().join("x/capscore.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("y/capscore.json")).unwrap());
    let r = &read_json(dir.path().join("x/capscore.json"))["reports"]["dsc"];
    assert_eq!(r["assertions_total"], 4);
    assert_eq!(r["assertions_verified"], 3);
    assert_eq!(r["capscore"].as_f64().unwrap(), 75.0);
}

#[test]
fn exit_codes() {
    let (dir, _) = corpus(3);
    let code = |args: &[&str]| capkit(dir.path(), args).status.code();
    assert_eq!(code(&["stats"]), Some(2));
    assert_eq!(
        code(&["mix", "corpus.jsonl", "-o", "m", "--ratio", "1.5"]),
        Some(2)
    );
    assert_eq!(code(&["stats", "missing.jsonl", "-o", "s"]), Some(3));
    assert_eq!(
        code(&["chair", "corpus.jsonl", "-o", "c", "--vocab", "nope.tsv"]),
        Some(3)
    );
    assert_eq!(code(&["recaption", "corpus.jsonl", "-o", "r"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));

    // nothing listens on port 9; one attempt per record, no waiting
    fs::write(
        dir.path().join("dead.toml"),
        "[endpoints.caption]\nbase_url = \"http://127.0.0.1:9\"\nmax_retries = 0\ntimeout_ms = 500\n",
    )
    .unwrap();
    assert_eq!(
        code(&[
            "recaption",
            "corpus.jsonl",
            "-o",
            "r",
            "--config",
            "dead.toml"
        ]),
        Some(4)
    );
    let rejects = fs::read_to_string(dir.path().join("r/recaption-ssc.rejects.jsonl")).unwrap();
    assert_eq!(rejects.lines().count(), 3);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let (dir, _) = corpus(50);
    fs::write(
        dir.path().join("run.toml"),
        "manifest = \"corpus.jsonl\"\nseed = 3\n[recipe]\nalt_ratio = 0.0\nsources = [\"alt\", \"ssc\"]\n",
    )
    .unwrap();
    ok(dir.path(), &["mix", "--config", "run.toml", "-o", "a"]);
    assert!(mixed_lines(&dir.path().join("a"))
        .iter()
        .all(|l| l["source"] == "ssc"));
    ok(
        dir.path(),
        &["mix", "--config", "run.toml", "-o", "b", "--ratio", "1"],
    );
    assert!(mixed_lines(&dir.path().join("b"))
        .iter()
        .all(|l| l["source"] == "alt"));
    let run = read_json(dir.path().join("b/run.json"));
    assert_eq!(run["seed"], 3);
    assert_eq!(run["config"]["recipe"]["alt_ratio"], 1.0);
}

#[test]
fn recaption_mock_resumes_without_duplicates() {
    let (dir, _) = corpus(30);
    ok(
        dir.path(),
        &[
            "recaption",
            "corpus.jsonl",
            "-o",
            "r",
            "--mock",
            "--skip-quality",
        ],
    );
    let out = dir.path().join("r/recaption-ssc.jsonl");
    let first = fs::read_to_string(&out).unwrap();
    assert_eq!(first.lines().count(), 30);

    // drop the last ten results and resume
    let kept: String = first.lines().take(20).map(|l| format!("{l}\n")).collect();
    fs::write(&out, kept).unwrap();
    ok(
        dir.path(),
        &[
            "recaption",
            "corpus.jsonl",
            "-o",
            "r",
            "--mock",
            "--skip-quality",
        ],
    );
    let report = read_json(dir.path().join("r/recaption_report.json"));
    assert_eq!(report["formats"]["ssc"]["summary"]["skipped_done"], 20);
    assert_eq!(report["formats"]["ssc"]["summary"]["submitted"], 10);

    let mut ids: Vec<String> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(ids.len(), 30);
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 30);
}
