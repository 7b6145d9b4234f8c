//! Builds a [`RunConfig`] from command-line flags and an optional TOML file.
//! Values present in the file take precedence over flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use opforge_core::scheduler::RunConfig;
use toml::{Table, Value};

#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML run configuration; its values override the flags below.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Operator catalog (JSONL or YAML).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Concurrent operator sessions.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Generation model preset.
    #[arg(long)]
    pub generation: Option<String>,
    /// Summarizer model preset.
    #[arg(long)]
    pub summarizer: Option<String>,
    /// Use the scripted LLM with this script instead of an HTTP endpoint.
    #[arg(long, conflicts_with = "http_llm")]
    pub mock_llm: Option<PathBuf>,
    /// Use the OpenAI-compatible endpoint named in the environment.
    #[arg(long)]
    pub http_llm: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Worker executable, spawned once per pool slot.
    #[arg(long)]
    pub worker_program: Option<PathBuf>,
    /// Argument passed to the worker executable (repeatable).
    #[arg(long = "worker-arg", allow_hyphen_values = true)]
    pub worker_args: Vec<String>,
    /// Connect to an already running worker instead of spawning one.
    #[arg(long, conflicts_with = "worker_program")]
    pub worker_tcp: Option<String>,
    #[arg(long)]
    pub max_llm_calls: Option<u32>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    #[arg(long)]
    pub no_linter: bool,
    #[arg(long)]
    pub no_summarization: bool,
    /// Restrict the campaign to these operators (repeatable).
    #[arg(long = "only")]
    pub only: Vec<String>,
    /// JSONL file of captured test cases.
    #[arg(long)]
    pub captured_inputs: Option<PathBuf>,
    /// Schedule only operators that failed in this report.
    #[arg(long)]
    pub retry_failed_from: Option<PathBuf>,
    #[arg(long)]
    pub lint_config: Option<PathBuf>,
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long)]
    pub llm_concurrency: Option<usize>,
    /// Replace an existing run with the same id.
    #[arg(long)]
    pub overwrite: bool,
}

fn abs(p: &Path) -> anyhow::Result<String> {
    let p = if p.is_relative() { std::env::current_dir()?.join(p) } else { p.to_path_buf() };
    Ok(p.to_string_lossy().into_owned())
}

fn sub<'t>(t: &'t mut Table, key: &str) -> &'t mut Table {
    t.entry(key.to_string())
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
        .expect("flag tables are only created here")
}

impl RunFlags {
    /// The flag layer as a TOML table. Paths are made absolute against the
    /// current directory so that they survive the config-relative resolution
    /// applied later.
    pub fn to_table(&self) -> anyhow::Result<Table> {
        let mut t = Table::new();
        if let Some(v) = &self.run_id {
            t.insert("run_id".into(), v.clone().into());
        }
        for (key, path) in [
            ("catalog", &self.catalog),
            ("output_dir", &self.output_dir),
            ("captured_inputs", &self.captured_inputs),
            ("retry_failed_from", &self.retry_failed_from),
            ("lint_config", &self.lint_config),
        ] {
            if let Some(p) = path {
                t.insert(key.into(), abs(p)?.into());
            }
        }
        if let Some(v) = self.parallelism {
            t.insert("parallelism".into(), (v as i64).into());
        }
        if let Some(v) = self.llm_concurrency {
            t.insert("llm_concurrency".into(), (v as i64).into());
        }
        if let Some(v) = &self.generation {
            t.insert("generation".into(), v.clone().into());
        }
        if let Some(v) = &self.summarizer {
            t.insert("summarizer".into(), v.clone().into());
        }
        if let Some(v) = &self.device {
            t.insert("device".into(), v.clone().into());
        }
        if self.overwrite {
            t.insert("overwrite".into(), true.into());
        }
        if let Some(script) = &self.mock_llm {
            let llm = sub(&mut t, "llm");
            llm.insert("kind".into(), "mock".into());
            llm.insert("script".into(), abs(script)?.into());
        } else if self.http_llm {
            sub(&mut t, "llm").insert("kind".into(), "http".into());
        }
        if let Some(n) = self.workers {
            sub(&mut t, "workers").insert("count".into(), (n as i64).into());
        }
        if let Some(program) = &self.worker_program {
            let program = if program.components().count() > 1 { abs(program)? } else { program.to_string_lossy().into_owned() };
            let mut spec = Table::new();
            spec.insert("kind".into(), "command".into());
            spec.insert("program".into(), program.into());
            spec.insert("args".into(), Value::Array(self.worker_args.iter().cloned().map(Value::from).collect()));
            sub(&mut t, "workers").insert("spec".into(), Value::Table(spec));
        } else if let Some(addr) = &self.worker_tcp {
            let mut spec = Table::new();
            spec.insert("kind".into(), "tcp".into());
            spec.insert("addr".into(), addr.clone().into());
            sub(&mut t, "workers").insert("spec".into(), Value::Table(spec));
        }
        if let Some(v) = self.max_llm_calls {
            sub(&mut t, "session").insert("max_llm_calls".into(), i64::from(v).into());
        }
        if let Some(v) = self.max_attempts {
            sub(&mut t, "session").insert("max_attempts".into(), i64::from(v).into());
        }
        if self.no_linter {
            sub(&mut t, "session").insert("linter_enabled".into(), false.into());
        }
        if self.no_summarization {
            sub(&mut t, "session").insert("summarization_enabled".into(), false.into());
        }
        if !self.only.is_empty() {
            sub(&mut t, "filter").insert(
                "include_only".into(),
                Value::Array(self.only.iter().cloned().map(Value::from).collect()),
            );
        }
        Ok(t)
    }

    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut merged = self.to_table()?;
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let file: Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                overlay(&mut merged, file);
                path.parent().map(Path::to_path_buf).unwrap_or_default()
            }
            None => std::env::current_dir()?,
        };
        let text = toml::to_string(&merged)?;
        let what = self.config.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "flags".into());
        RunConfig::from_toml(&text, &base).with_context(|| format!("invalid run configuration ({what})"))
    }
}

/// Recursively copies `top` onto `base`; `top` wins on conflicts.
pub fn overlay(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            "run_id = \"from-file\"\ncatalog = \"cat.jsonl\"\n[session]\nmax_attempts = 2\n[workers]\ncount = 3\n",
        )
        .unwrap();
        let flags = RunFlags {
            config: Some(cfg),
            run_id: Some("from-flag".into()),
            parallelism: Some(5),
            mock_llm: Some(dir.path().join("m.json")),
            worker_program: Some("opforge-mock-worker".into()),
            worker_args: vec!["--backend".into(), "mock".into()],
            max_attempts: Some(1),
            max_llm_calls: Some(4),
            no_linter: true,
            ..Default::default()
        };
        let rc = flags.resolve().unwrap();
        assert_eq!(rc.run_id, "from-file");
        assert_eq!(rc.parallelism, 5);
        assert_eq!(rc.session.max_attempts, 2);
        assert_eq!(rc.session.max_llm_calls, 4);
        assert!(!rc.session.linter_enabled);
        assert_eq!(rc.workers.count, 3);
        assert_eq!(rc.catalog, dir.path().join("cat.jsonl"));
    }

    #[test]
    fn flags_alone_are_enough() {
        let flags = RunFlags {
            run_id: Some("r".into()),
            catalog: Some("/tmp/c.jsonl".into()),
            mock_llm: Some("/tmp/m.json".into()),
            worker_tcp: Some("127.0.0.1:9".into()),
            only: vec!["exp".into()],
            ..Default::default()
        };
        let rc = flags.resolve().unwrap();
        assert_eq!(rc.filter.include_only.unwrap().len(), 1);
    }

    #[test]
    fn missing_required_fields_are_reported() {
        let err = RunFlags::default().resolve().unwrap_err();
        assert!(format!("{err:#}").contains("invalid run configuration"));
    }
}
