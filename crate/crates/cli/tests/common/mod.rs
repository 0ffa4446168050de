#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").canonicalize().unwrap()
}

pub fn data(rel: &str) -> PathBuf {
    data_dir().join(rel)
}

pub fn engine_config() -> PathBuf {
    data("engine.json")
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cmdtriage"));
    cmd.env_remove("RUST_LOG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

/// Write an engine config into `dir` that points at the bundled data files
/// unless overridden.
pub fn write_config(dir: &Path, rules: &Path, epsilon: f64) -> PathBuf {
    let config = serde_json::json!({
        "backend": {"kind": "mock", "rules_path": rules, "seed": 0},
        "triage": {"epsilon": epsilon, "h": 4, "k": 3, "seed": 42},
        "paths": {
            "embedding_table": data("embeddings.txt"),
            "context_set": data("contexts.json"),
            "dataset": data("sagc_fixture.ndjson"),
        }
    });
    let path = dir.join("engine.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}
