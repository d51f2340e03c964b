//! Drives the `kbc` binary end to end on a small generated dataset.

use std::path::Path;
use std::process::{Command, Output};

fn kbc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbc")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &str = "seed = 4
threads = 1
[synth]
entities = 60
types = 4
relations = 4
triples_per_relation = 12
sentences_per_triple = 2
[embeddings]
epochs = 5
[context]
epochs = 3
[relex]
epochs = 3
";

#[test]
fn synth_then_run_all_then_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    let msg = ok(&kbc(&["--config", "small.toml", "--out", "out", "synth", "--dir", "data"], d));
    assert!(msg.contains("run-all"), "{msg}");
    let run = d.join("data/run.toml");
    let text = std::fs::read_to_string(&run).unwrap();
    assert!(text.contains("entities = 60") && text.contains("epochs = 3"), "settings lost:\n{text}");

    let cfg = run.to_str().unwrap();
    let out = kbc(&["--config", cfg, "run-all"], d);
    let metrics: serde_json::Value = serde_json::from_str(&ok(&out)).unwrap();
    for key in ["entity_linking", "heldout_linking", "relation_extraction", "triple_precision", "bootstrap_rounds", "counts"] {
        assert!(metrics.get(key).is_some(), "missing {key}");
    }
    assert!(d.join("out/metrics.json").is_file());
    assert!(d.join("out/kb_enriched/triples.tsv").is_file());

    let again = kbc(&["--config", cfg, "run-all"], d);
    ok(&again);
    let err = String::from_utf8_lossy(&again.stderr);
    assert!(err.contains("executed: []"), "{err}");

    let cached = kbc(&["--config", cfg, "train-re"], d);
    ok(&cached);
    assert!(String::from_utf8_lossy(&cached.stderr).contains("up to date"));
    ok(&kbc(&["--config", cfg, "train-re", "--force"], d));

    let eval: serde_json::Value = serde_json::from_str(&ok(&kbc(&["--config", cfg, "eval"], d))).unwrap();
    assert_eq!(eval, metrics);

    let kb = ok(&kbc(&["--out", "o2", "ingest-kb", "--entities", "data/entities.tsv", "--triples", "data/triples.tsv"], d));
    assert!(kb.starts_with("60 entities"), "{kb}");
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = kbc(&["--config", "nope.toml", "run-all"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));

    std::fs::write(dir.path().join("bad.toml"), "[relex]\nhidden = 7\n").unwrap();
    let out = kbc(&["--config", "bad.toml", "train-re"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = kbc(&["--out", "o", "train-re"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-re"));
}
