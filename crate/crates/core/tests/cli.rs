use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clifs::corpus::{read_documents, write_documents, Document, FusionLabel};
use clifs::synth::{fusion_corpus, risk_corpus};
use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"
stub = true
[features]
embedding_dim = 16
[train.grid]
n_estimators = [20]
max_depth = [0]
min_samples_leaf = [1, 3]
min_samples_split = [2]
scaler = ["none"]
[eval]
bootstrap_resamples = 50
"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(ws.path("run.toml"), SMALL).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn docs(&self, name: &str, docs: &[Document]) -> PathBuf {
        let p = self.path(name);
        write_documents(&p, docs).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.path("run.toml");
        Command::new(env!("CARGO_BIN_EXE_clifs"))
            .arg("--config")
            .arg(&config)
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

#[test]
fn score_writes_one_record_per_document_and_is_stable() {
    let ws = Workspace::new();
    let input = ws.docs("in.jsonl", &fusion_corpus(3, 1).unwrap());
    let (a, b) = (ws.path("a.jsonl"), ws.path("b.jsonl"));
    ok(&ws.run(&["score", "--input", s(&input), "--output", s(&a)]));
    ok(&ws.run(&["score", "--input", s(&input), "--output", s(&b)]));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn empty_input_gives_header_only() {
    let ws = Workspace::new();
    let input = ws.docs("in.jsonl", &[]);
    let out = ws.path("f.jsonl");
    ok(&ws.run(&["score", "--input", s(&input), "--output", s(&out)]));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn train_then_eval_round_trip() {
    let ws = Workspace::new();
    let docs = fusion_corpus(150, 3).unwrap();
    let train = ws.docs("train.jsonl", &docs[..120]);
    let test = ws.docs("test.jsonl", &docs[120..]);
    let (ftr, fte, model) = (ws.path("train.f"), ws.path("test.f"), ws.path("rf.json"));
    ok(&ws.run(&["score", "--input", s(&train), "--output", s(&ftr)]));
    ok(&ws.run(&["score", "--input", s(&test), "--output", s(&fte)]));
    let r = ok(&ws.run(&["train", "--features", s(&ftr), "--model", s(&model), "--task", "classification"]));
    assert_eq!(r["command"], "train");
    assert_eq!(r["n_rows"], 120);
    let e = ok(&ws.run(&["eval", "--features", s(&fte), "--model", s(&model), "--train", s(&ftr)]));
    let rows = e["rows"].as_array().unwrap();
    assert_eq!(rows[0]["name"], "majority");
    assert_eq!(rows[1]["name"], "rf");
    assert_eq!(rows[1]["n"], 30);
    assert_eq!(e["config_hash"], r["config_hash"]);
}

#[test]
fn majority_baseline_on_balanced_data_is_one_sixth() {
    let ws = Workspace::new();
    let mut docs = fusion_corpus(30, 4).unwrap();
    for (i, d) in docs.iter_mut().enumerate() {
        d.label = Some(FusionLabel::ALL[i % 3]);
    }
    let input = ws.docs("in.jsonl", &docs);
    let f = ws.path("f");
    ok(&ws.run(&["score", "--input", s(&input), "--output", s(&f)]));
    let e = ok(&ws.run(&["eval", "--features", s(&f), "--train", s(&f)]));
    let m = e["rows"][0]["macro_f1"].as_f64().unwrap();
    assert!((m - 1.0 / 6.0).abs() < 1e-12, "{m}");
}

#[test]
fn stub_augmentation_keeps_lineage() {
    let ws = Workspace::new();
    let docs = fusion_corpus(40, 5).unwrap();
    let train = ws.docs("train.jsonl", &docs[..30]);
    let test = ws.docs("test.jsonl", &docs[30..]);
    let out = ws.path("aug.jsonl");
    let r = ok(&ws.run(&["augment", "--input", s(&train), "--output", s(&out), "--test", s(&test)]));
    assert_eq!(r["leakage_checked"], true);
    let aug = read_documents(&out).unwrap();
    assert_eq!(r["n_records"].as_u64().unwrap() as usize, aug.len());
    assert!(aug.len() > 30);
    for d in aug.iter().filter(|d| !d.provenance.is_human()) {
        let src = d.source_id.as_deref().unwrap();
        assert!(docs[..30].iter().any(|h| h.id == src), "{}", d.id);
    }
}

#[test]
fn augmenting_a_test_item_fails_closed() {
    let ws = Workspace::new();
    let docs = fusion_corpus(40, 6).unwrap();
    let mut pool = docs[..30].to_vec();
    pool.push(docs[35].clone());
    let train = ws.docs("train.jsonl", &pool);
    let test = ws.docs("test.jsonl", &docs[30..]);
    let out = ws.run(&["augment", "--input", s(&train), "--output", s(&ws.path("aug")), "--test", s(&test)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!ws.path("aug").exists());
}

#[test]
fn missing_input_is_exit_two() {
    let ws = Workspace::new();
    let out = ws.run(&["score", "--input", "nope.jsonl", "--output", "f.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ws.run(&["eval", "--features", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_documents_are_exit_three() {
    let ws = Workspace::new();
    std::fs::write(ws.path("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    let out = ws.run(&["score", "--input", "bad.jsonl", "--output", "f.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn risk_command_reports_all_rows() {
    let ws = Workspace::new();
    let docs = fusion_corpus(90, 7).unwrap();
    let train = ws.docs("train.jsonl", &docs);
    let (f, model) = (ws.path("f"), ws.path("rf.json"));
    ok(&ws.run(&["score", "--input", s(&train), "--output", s(&f)]));
    ok(&ws.run(&["train", "--features", s(&f), "--model", s(&model), "--task", "classification"]));
    let risk = ws.docs("risk.jsonl", &risk_corpus(2, 2, 1));
    let r = ok(&ws.run(&["risk", "--input", s(&risk), "--model", s(&model)]));
    let names: Vec<&str> = r["rows"].as_array().unwrap().iter().map(|x| x["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["majority", "vri_threshold", "vri_rf", "clifs_vri_rf"]);
    assert!(r["caveat"].as_str().is_some());
}
