use std::path::Path;
use std::process::{Command, Output};

use kmse::harness::MetricReport;
use kmse::search::{replay_trace, Trace};

fn kmse(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmse")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const TINY_SCORER: &str = r#"{"gin_layers": 2, "gin_width": 16, "fp_hidden": 16, "mol_hidden": 16,
    "embed_dim": 16, "ffn_dim": 16, "transformer_layers": 1, "batch_size": 8}"#;

const MOCK: &str = r#"{"init": ["<answer>CCCC</answer>"], "critique": ["Too few oxygens."],
    "rewrite": ["<answer>CCOC(=O)C</answer>"]}"#;

#[test]
fn usage_errors_exit_one_and_runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = kmse(&["elucidate", "--kb", "kb.jsonl", "--ckpt", "x.ckpt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--question"));
    assert_eq!(kmse(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(kmse(&["bogus"], dir.path()).status.code(), Some(1));
    let out = kmse(&["kb", "embed", "--kb", "missing.jsonl", "--ckpt", "x", "--out", "y"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_pipeline_under_the_mock() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus: Vec<&str> = include_str!("../data/corpus.smi").lines().collect();
    std::fs::write(d.join("corpus.smi"), corpus[..60].join("\n")).unwrap();
    std::fs::write(d.join("train.smi"), corpus[..30].join("\n")).unwrap();
    std::fs::write(d.join("val.smi"), corpus[30..36].join("\n")).unwrap();
    std::fs::write(d.join("targets.smi"), "CCOC(=O)C\nCCCCO\nCC(=O)OC\n").unwrap();
    std::fs::write(d.join("scorer.json"), TINY_SCORER).unwrap();
    std::fs::write(d.join("mock.json"), MOCK).unwrap();

    ok(&kmse(
        &["kb", "build", "--corpus", "corpus.smi", "--min-count", "3", "--describer", "mock", "--out", "kb.jsonl"],
        d,
    ));
    let train = kmse(
        &[
            "scorer",
            "train",
            "--data",
            "train.smi",
            "--val",
            "val.smi",
            "--epochs",
            "2",
            "--seed",
            "1",
            "--config",
            "scorer.json",
            "--out",
            "s.ckpt",
        ],
        d,
    );
    ok(&train);
    let summary: serde_json::Value = serde_json::from_slice(&train.stdout).unwrap();
    assert_eq!(summary["history"].as_array().unwrap().len(), 2);
    let eval = kmse(&["scorer", "eval", "--ckpt", "s.ckpt", "--data", "val.smi"], d);
    ok(&eval);
    let eval: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(eval["pairs"], 6);
    ok(&kmse(&["kb", "embed", "--kb", "kb.jsonl", "--ckpt", "s.ckpt", "--out", "kb.embedded.jsonl"], d));
    ok(&kmse(&["simulate", "--smiles", "targets.smi", "--out-dir", "questions"], d));

    let base = [
        "elucidate",
        "--question",
        "questions/q0001.json",
        "--kb",
        "kb.embedded.jsonl",
        "--ckpt",
        "s.ckpt",
        "--mock",
        "mock.json",
    ];
    let full = kmse(&[&base[..], &["--trace", "full.json"]].concat(), d);
    ok(&full);
    let trace = Trace::load(d.join("full.json")).unwrap();
    assert_eq!(trace.nodes.len(), 9);
    assert_eq!(trace.retrieved.len(), 1);
    replay_trace(&trace).unwrap();

    ok(&kmse(&[&base[..], &["--iters", "0", "--topk", "0", "--trace", "ablated.json"]].concat(), d));
    let ablated = Trace::load(d.join("ablated.json")).unwrap();
    assert_eq!(ablated.nodes.len(), 1);
    assert!(ablated.retrieved.is_empty());
    assert_eq!(ablated.calls.len(), 1);

    ok(&kmse(
        &[
            "bench",
            "--dataset",
            "questions",
            "--kb",
            "kb.embedded.jsonl",
            "--ckpt",
            "s.ckpt",
            "--mock",
            "mock.json",
            "--iters",
            "2",
            "--report",
            "report.json",
        ],
        d,
    ));
    let report = MetricReport::load(d.join("report.json")).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.is_consistent());
    assert!(d.join("traces/q0003.json").exists());
}

#[test]
fn bundled_samples_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/samples");
    let q = kmse::search::ElucidationQuestion::load(dir.join("anhydride.json")).unwrap();
    q.validate().unwrap();
    assert_eq!(q.tokens().unwrap().carbon.len(), 6);
    kmse::llm::MockBook::load(dir.join("mock_script.json")).unwrap();
}
