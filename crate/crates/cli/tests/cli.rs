use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[paths]
videos = "data/videos.jsonl"
interactions = "data/pairs.jsonl"
manifest = "data/manifest.json"
checkpoint = "out/model.ckpt"
train_report = "out/train.json"
eval_report = "out/eval.json"
ablation_table = "out/ablation.tsv"
ablation_report = "out/ablation.json"

[synth]
n_videos = 200
n_topics = 5
d_text = 8
d_visual = 8
zipf_exponent = 1.1
cross_topic_noise = 0.3
content_noise = 0.2
n_pairs = 3000
seed = 3

[model]
d_id = 8
d_out = 8

[train]
epochs = 1
batch_size = 64
"#;

fn workdir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn twotower(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twotower"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = twotower(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_train_evaluate() {
    let dir = workdir();
    let d = dir.path();
    ok(d, &["-c", "run.toml", "gen-data"]);
    assert_eq!(json(&d.join("data/manifest.json"))["n_videos"], 200);
    ok(d, &["-c", "run.toml", "train"]);
    assert!(d.join("out/model.ckpt").is_file());
    let train = json(&d.join("out/train.json"));
    assert_eq!(train["report"]["epochs"].as_array().unwrap().len(), 1);
    assert_eq!(train["config"]["train"]["batch_size"], 64);

    ok(d, &["-c", "run.toml", "eval", "--index", "out/index.bin"]);
    let eval = json(&d.join("out/eval.json"));
    let recall = eval["metrics"]["recall_at_k"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&recall));
    assert_eq!(eval["metrics"]["k"], 10);
    assert_eq!(eval["fingerprint"], train["fingerprint"]);
    assert!(d.join("out/index.bin").is_file());

    let listing = ok(d, &["-c", "run.toml", "recommend", "--trigger", "5", "-k", "4"]);
    let lines: Vec<_> = listing.lines().collect();
    assert_eq!(lines.len(), 4);
    for (rank, line) in lines.iter().enumerate() {
        let fields: Vec<_> = line.split('\t').collect();
        assert_eq!(fields.len(), 4, "{line}");
        assert_eq!(fields[0], (rank + 1).to_string());
        assert_ne!(fields[1], "5");
        fields[2].parse::<f64>().unwrap();
    }
}

#[test]
fn recommend_rejects_unknown_trigger() {
    let dir = workdir();
    let d = dir.path();
    ok(d, &["-c", "run.toml", "gen-data"]);
    ok(d, &["-c", "run.toml", "train"]);
    let out = twotower(d, &["-c", "run.toml", "recommend", "--trigger", "4242"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("4242"));
}

#[test]
fn sweep_ablation_has_every_ratio() {
    let dir = workdir();
    let d = dir.path();
    ok(d, &["-c", "run.toml", "gen-data"]);
    ok(d, &["-c", "run.toml", "ablate", "--preset", "sweep"]);
    let table = std::fs::read_to_string(d.join("out/ablation.tsv")).unwrap();
    let names: Vec<_> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "baseline_cf",
            "content_only",
            "mtl_1_1",
            "mtl_1_10",
            "mtl_1_100",
            "mtl_1_500",
            "mtl_1_1000"
        ]
    );
    let report = json(&d.join("out/ablation.json"));
    assert_eq!(report["report"]["rows"].as_array().unwrap().len(), 7);
    assert_eq!(report["config"]["ablation"]["preset"], "sweep");
}

#[test]
fn flags_override_set_which_overrides_the_file() {
    let dir = workdir();
    let d = dir.path();
    ok(d, &["-c", "run.toml", "--set", "synth.n_videos=150", "gen-data"]);
    assert_eq!(json(&d.join("data/manifest.json"))["n_videos"], 150);
    ok(
        d,
        &["-c", "run.toml", "--set", "train.epochs=3", "train", "--epochs", "2"],
    );
    let train = json(&d.join("out/train.json"));
    assert_eq!(train["report"]["epochs"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_statuses() {
    let dir = workdir();
    let d = dir.path();
    assert_eq!(twotower(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(twotower(d, &["train", "--epochs", "many"]).status.code(), Some(2));

    // Configuration errors are caught before anything is written.
    for bad in [
        vec!["-c", "run.toml", "--set", "train.epochs=0", "gen-data"],
        vec!["-c", "run.toml", "--set", "train.learning_rat=0.1", "gen-data"],
        vec!["-c", "run.toml", "ablate", "--preset", "everything"],
        vec!["-c", "missing.toml", "gen-data"],
    ] {
        let out = twotower(d, &bad);
        assert_eq!(
            out.status.code(),
            Some(3),
            "{bad:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(!d.join("data").exists());

    // Missing inputs are I/O failures.
    assert_eq!(twotower(d, &["-c", "run.toml", "train"]).status.code(), Some(4));
    assert!(!d.join("out").exists());
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = workdir();
    let d = dir.path();
    ok(d, &["-c", "run.toml", "gen-data"]);
    std::fs::write(d.join("data/pairs.jsonl"), "{\"trigger\": 0, \"candidate\": 99999}\n").unwrap();
    let out = twotower(d, &["-c", "run.toml", "train"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("99999"));
    assert!(!d.join("out/model.ckpt").exists());
}
