use std::fs;
use std::path::Path;
use std::process::Command;

use regime_tools::config::{Overrides, PipelineConfig};

const BIN: &str = env!("CARGO_BIN_EXE_regimes");

fn example() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic.json")
}

#[test]
fn example_config_loads() {
    let cfg = PipelineConfig::load(&example(), &Overrides::default()).unwrap();
    assert_eq!(cfg.train.n_prototypes, 8);
    assert_eq!(cfg.periods.len(), 2);
}

#[test]
fn synth_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["synth", "--config"])
        .arg(example())
        .arg("--out")
        .arg(dir.path())
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("synth/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"]["spec"]["seed"], 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| Command::new(BIN).args(args).output().unwrap().status.code();

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"data": {"synthetic": {}}, "bogus": 1}"#).unwrap();
    assert_eq!(code(&["train", "--config", bad.to_str().unwrap()]), Some(1));
    assert_eq!(code(&["frobnicate"]), Some(1));

    let missing = dir.path().join("missing.json");
    fs::write(&missing, r#"{"data": {"file": {"path": "nope.bin", "format": "packed_binary"}}, "oni_path": "oni.csv"}"#).unwrap();
    assert_eq!(code(&["train", "--config", missing.to_str().unwrap()]), Some(2));
}
