//! Fixture builders shared by the CLI integration tests and the acceptance
//! target: synthetic catalogs, scripted LLM and worker tables, run configs.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub const EXP: &str = include_str!("../../../core/data/reference/exp.py");

pub fn good_module(op: &str) -> String {
    format!("# candidate for {op}\n{EXP}")
}

pub fn log1p_module() -> String {
    EXP.replace("tl.exp(", "tl.log1p(")
}

pub fn opforge_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_opforge"))
}

pub fn mock_worker_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_opforge-mock-worker"))
}

pub fn opforge(args: &[&str]) -> Output {
    Command::new(opforge_bin()).args(args).output().expect("spawning opforge")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn op_name(i: usize) -> String {
    format!("op{i:02}")
}

/// Per-operator scripted behaviour.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Behaviour {
    Pass,
    NeverLints,
    Panics,
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write(&self, rel: &str, text: &str) -> PathBuf {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).unwrap();
        }
        std::fs::write(&p, text).unwrap();
        p
    }

    /// `n` float32 operators named op00, op01, ...
    pub fn catalog(&self, n: usize) -> PathBuf {
        let mut lines = vec![json!({"schema_version": 1}).to_string()];
        for i in 0..n {
            let name = op_name(i);
            lines.push(
                json!({
                    "name": name,
                    "docstring": format!("{name}(input) -> Tensor\nSynthetic operator number {i}."),
                    "dtypes": ["float32"],
                    "test_count": 3,
                    "tags": [],
                })
                .to_string(),
            );
        }
        self.write("catalog.jsonl", &(lines.join("\n") + "\n"))
    }

    pub fn llm_script(&self, n: usize, behaviour: impl Fn(usize) -> Behaviour) -> PathBuf {
        let mut ops = serde_json::Map::new();
        for i in 0..n {
            let name = op_name(i);
            let entry = match behaviour(i) {
                Behaviour::Pass => json!({"module": good_module(&name)}),
                Behaviour::NeverLints => json!({"module": log1p_module()}),
                Behaviour::Panics => json!({"panic": format!("scripted panic in {name}")}),
            };
            ops.insert(name, json!({"fallback": entry}));
        }
        self.write("llm.json", &serde_json::to_string_pretty(&json!({"operators": ops})).unwrap())
    }

    pub fn worker_script(&self, rules: Value) -> PathBuf {
        self.write("worker.json", &serde_json::to_string_pretty(&json!({"rules": rules})).unwrap())
    }

    /// A run config using subprocess mock workers.
    pub fn config(&self, name: &str, run_id: &str, parallelism: usize, workers: usize, extra: &str) -> PathBuf {
        let worker_script = self.path("worker.json");
        if !worker_script.exists() {
            self.worker_script(json!([]));
        }
        let args = [
            "--transport",
            "stdio",
            "--backend",
            "mock",
            "--mock-script",
            worker_script.to_str().unwrap(),
        ];
        let text = format!(
            r#"run_id = "{run_id}"
catalog = "catalog.jsonl"
output_dir = "out"
parallelism = {parallelism}
{extra}
[llm]
kind = "mock"
script = "llm.json"

[workers]
count = {workers}
spec = {{ kind = "command", program = {program}, args = {args} }}
"#,
            program = toml_str(&mock_worker_bin()),
            args = serde_json::to_string(&args).unwrap(),
        );
        self.write(name, &text)
    }

    pub fn report_json(&self, run_id: &str) -> PathBuf {
        self.path(&format!("out/runs/{run_id}/report.json"))
    }

    pub fn report(&self, run_id: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.report_json(run_id)).unwrap()).unwrap()
    }
}

fn toml_str(p: &Path) -> String {
    serde_json::to_string(p.to_str().unwrap()).unwrap()
}
