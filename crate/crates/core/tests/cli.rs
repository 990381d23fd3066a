mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::toy_corpus_path;
use serde_json::Value;

fn setexpan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setexpan"))
        .args(args)
        .env_remove("SETEXPAN_CONFIG")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Drops the wall-clock fields from a JSON document.
fn strip_timestamps(mut v: Value) -> Value {
    if let Some(m) = v.get_mut("manifest").and_then(Value::as_object_mut) {
        m.remove("started_at");
        m.remove("finished_at");
    }
    v
}

struct Synth {
    dir: tempfile::TempDir,
}

impl Synth {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        stdout(&setexpan(&["gen-synth", p(dir.path())]));
        let corpus = dir.path().join("corpus.jsonl");
        let index = dir.path().join("synth.idx");
        stdout(&setexpan(&["build", p(&corpus), p(&index)]));
        Synth { dir }
    }

    fn path(&self, name: &str) -> String {
        p(&self.dir.path().join(name)).to_string()
    }

    fn eval_args(&self) -> Vec<String> {
        vec![
            "eval".into(),
            self.path("synth.idx"),
            self.path("queries.json"),
            self.path("truth.json"),
        ]
    }
}

fn run_owned(args: &[String]) -> Output {
    setexpan(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn build_reports_the_toy_counts_and_the_index_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("toy.idx");
    let out = stdout(&setexpan(&[
        "build",
        p(&toy_corpus_path()),
        p(&index),
        "--min-count",
        "1",
    ]));
    assert_eq!(out, "entities\t5\nfeatures\t14\nedges\t53\n");
    let g = setexpan::load_index(&index).unwrap();
    assert_eq!(
        (g.num_entities(), g.num_features(), g.num_edges()),
        (5, 14, 53)
    );
}

#[test]
fn build_fails_on_a_missing_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = setexpan(&[
        "build",
        "/nonexistent/corpus.jsonl",
        p(&dir.path().join("x.idx")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn build_fails_when_every_entity_is_pruned() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("x.idx");
    let out = setexpan(&[
        "build",
        p(&toy_corpus_path()),
        p(&index),
        "--min-count",
        "1000000",
    ]);
    assert!(!out.status.success());
    assert!(!index.exists());
}

#[test]
fn expand_at_target_prints_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("toy.idx");
    stdout(&setexpan(&[
        "build",
        p(&toy_corpus_path()),
        p(&index),
        "--min-count",
        "1",
    ]));
    let out = stdout(&setexpan(&[
        "expand",
        p(&index),
        "--seed",
        "paris",
        "--seed",
        "rome",
        "-K",
        "2",
    ]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("# manifest: "));
    assert_eq!(lines[1], "entity\trank\titeration\tmrr");
}

#[test]
fn expand_names_an_unknown_seed() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("toy.idx");
    stdout(&setexpan(&[
        "build",
        p(&toy_corpus_path()),
        p(&index),
        "--min-count",
        "1",
    ]));
    let out = setexpan(&["expand", p(&index), "--seed", "paris", "--seed", "Gotham"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gotham"));
}

#[test]
fn expand_json_is_deterministic_and_stays_in_class() {
    let s = Synth::new();
    let args = |out: &str| {
        vec![
            "expand".to_string(),
            s.path("synth.idx"),
            "--seed".into(),
            "C1E000".into(),
            "--seed".into(),
            "C1E001".into(),
            "--seed".into(),
            "C1E002".into(),
            "-K".into(),
            "12".into(),
            "--rng-seed".into(),
            "5".into(),
            "--output".into(),
            "json".into(),
            "--history".into(),
            "--out".into(),
            s.path(out),
        ]
    };
    stdout(&run_owned(&args("a.json")));
    stdout(&run_owned(&args("b.json")));
    let read = |name: &str| -> Value {
        serde_json::from_str(&std::fs::read_to_string(s.path(name)).unwrap()).unwrap()
    };
    let a = strip_timestamps(read("a.json"));
    assert_eq!(a, strip_timestamps(read("b.json")));
    assert_eq!(a["manifest"]["config"]["rng_seed"], 5);
    let entities = a["entities"].as_array().unwrap();
    assert!(!entities.is_empty());
    for e in entities {
        assert!(e["entity"].as_str().unwrap().starts_with("c1e"), "{e}");
    }
}

#[test]
fn eval_on_an_empty_query_file_succeeds() {
    let s = Synth::new();
    std::fs::write(s.path("empty.json"), "[]").unwrap();
    let out = stdout(&setexpan(&[
        "eval",
        &s.path("synth.idx"),
        &s.path("empty.json"),
        &s.path("truth.json"),
        "--format",
        "json",
    ]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["report"]["queries"].as_array().unwrap().is_empty());
    assert!(v["report"]["mmap"].as_object().unwrap().is_empty());
}

#[test]
fn sweep_matches_eval_and_prefers_the_default_alpha() {
    let s = Synth::new();
    let mut eval = s.eval_args();
    eval.extend(["--format".into(), "json".into(), "--k".into(), "10".into()]);
    let eval: Value = serde_json::from_str(&stdout(&run_owned(&eval))).unwrap();

    let mut sweep = s.eval_args();
    sweep[0] = "sweep".into();
    sweep.extend(
        [
            "--param", "alpha", "--values", "0.1,0.6", "--k", "10", "--format", "json",
        ]
        .map(String::from),
    );
    let sweep: Value = serde_json::from_str(&stdout(&run_owned(&sweep))).unwrap();
    let rows = sweep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let mmap = |row: &Value| row["mmap"]["10"].as_f64().unwrap();
    assert_eq!(
        mmap(&rows[1]),
        eval["report"]["mmap"]["10"].as_f64().unwrap()
    );
    assert!(mmap(&rows[1]) >= mmap(&rows[0]));
}

#[test]
fn sweep_table_has_one_row_per_value() {
    let s = Synth::new();
    let mut sweep = s.eval_args();
    sweep[0] = "sweep".into();
    sweep.extend(["--param", "T", "--values", "1,2,3", "--k", "10"].map(String::from));
    let out = stdout(&run_owned(&sweep));
    let data: Vec<&str> = out
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(data.len(), 3, "{out}");
}

#[test]
fn sweep_rejects_an_unknown_parameter() {
    let s = Synth::new();
    let mut sweep = s.eval_args();
    sweep[0] = "sweep".into();
    sweep.extend(["--param", "beta", "--values", "1"].map(String::from));
    assert!(!run_owned(&sweep).status.success());
}

#[test]
fn gen_synth_rejects_noise_outside_the_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    for noise in ["-0.1", "1.5"] {
        let out = setexpan(&["gen-synth", p(dir.path()), "--noise", noise]);
        assert!(!out.status.success(), "noise {noise}");
    }
}

#[test]
fn gen_synth_is_byte_identical_for_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        stdout(&setexpan(&["gen-synth", p(d.path()), "--rng-seed", "42"]));
    }
    for f in ["corpus.jsonl", "queries.json", "truth.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}
