//! Campaign configuration (TOML) and assembly of the shared services.
//!
//! ```toml
//! run_id = "baseline"
//! catalog = "catalog.jsonl"
//! output_dir = "out"
//! parallelism = 8
//! generation = "cwm"            # preset name or a full [generation] table
//!
//! [session]
//! linter_enabled = true
//!
//! [llm]
//! kind = "mock"
//! script = "mock_llm.json"
//!
//! [workers]
//! count = 8
//! spec = { kind = "command", program = "opforge-mock-worker", args = ["--backend", "mock"] }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use super::dispatch::Campaign;
use super::report::{ConfigSnapshot, RunReport};
use crate::catalog::{filter_operators, load_catalog, FilterPolicy, OperatorCatalog, OperatorSpec};
use crate::fsm::{sanitize_component, SessionConfig, SessionDeps};
use crate::lint::{default_config, load_lint_config, LintConfig};
use crate::llm::{HttpChatClient, LlmGateway, MockLlm, MockScript, ModelParams, DEFAULT_CONCURRENCY_LIMIT};
use crate::prompt::PromptFactory;
use crate::protocol::{PoolConfig, TestCase, WorkerPool, WorkerSpec, WorkerTimeouts};

/// A preset name or explicit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Preset(String),
    Params(ModelParams),
}

impl ModelChoice {
    pub fn resolve(&self) -> anyhow::Result<ModelParams> {
        let p = match self {
            ModelChoice::Preset(name) => {
                ModelParams::preset(name).with_context(|| format!("unknown model preset `{name}`"))?
            }
            ModelChoice::Params(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

fn default_cwm() -> ModelChoice {
    ModelChoice::Preset("cwm".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmConfig {
    /// Scripted responses; see the mock script format.
    Mock { script: PathBuf },
    /// OpenAI-compatible endpoint configured through environment variables.
    Http {
        #[serde(default = "default_http_timeout")]
        timeout_secs: u64,
    },
}

fn default_http_timeout() -> u64 {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkersConfig {
    #[serde(default = "default_one")]
    pub count: usize,
    pub spec: WorkerSpec,
    #[serde(default)]
    pub timeouts: WorkerTimeouts,
    #[serde(default = "default_restarts")]
    pub max_restarts_per_worker: u32,
    #[serde(default = "default_lease_secs")]
    pub lease_timeout_secs: u64,
}

fn default_one() -> usize {
    1
}
fn default_restarts() -> u32 {
    3
}
fn default_lease_secs() -> u64 {
    3600
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_llm_concurrency() -> usize {
    DEFAULT_CONCURRENCY_LIMIT
}

impl WorkersConfig {
    pub fn pool_config(&self) -> PoolConfig {
        PoolConfig {
            workers: vec![self.spec.clone(); self.count],
            lease_timeout: Duration::from_secs(self.lease_timeout_secs),
            max_restarts_per_worker: self.max_restarts_per_worker,
            timeouts: self.timeouts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub catalog: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_one")]
    pub parallelism: usize,
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default = "default_cwm")]
    pub generation: ModelChoice,
    #[serde(default = "default_cwm")]
    pub summarizer: ModelChoice,
    pub llm: LlmConfig,
    pub workers: WorkersConfig,
    /// JSONL file of captured test cases.
    #[serde(default)]
    pub captured_inputs: Option<PathBuf>,
    /// Only schedule operators that failed in this earlier report.
    #[serde(default)]
    pub retry_failed_from: Option<PathBuf>,
    #[serde(default)]
    pub lint_config: Option<PathBuf>,
    /// Device label used in prompts.
    #[serde(default)]
    pub device: Option<String>,
    #[serde(default = "default_llm_concurrency")]
    pub llm_concurrency: usize,
    #[serde(default)]
    pub overwrite: bool,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("parsing run config")?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base).with_context(|| format!("in {}", path.display()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.catalog);
        resolve(base, &mut self.output_dir);
        for p in [&mut self.captured_inputs, &mut self.retry_failed_from, &mut self.lint_config]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        if let LlmConfig::Mock { script } = &mut self.llm {
            resolve(base, script);
        }
        // A bare program name is looked up on PATH; anything with a
        // separator is a path relative to the config.
        if let WorkerSpec::Command { program, .. } = &mut self.workers.spec {
            if program.components().count() > 1 {
                resolve(base, program);
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.run_id.is_empty() || sanitize_component(&self.run_id) != self.run_id {
            bail!("run_id `{}` must be nonempty and use only [A-Za-z0-9._-]", self.run_id);
        }
        if self.parallelism < 1 {
            bail!("parallelism must be at least 1");
        }
        if self.workers.count < 1 {
            bail!("workers.count must be at least 1");
        }
        if self.llm_concurrency < 1 {
            bail!("llm_concurrency must be at least 1");
        }
        self.filter.validate().map_err(anyhow::Error::msg)?;
        self.session.validate()?;
        self.generation.resolve()?;
        self.summarizer.resolve()?;
        Ok(())
    }
}

/// Reads captured test cases, one JSON object per line.
pub fn load_captured(path: &Path) -> anyhow::Result<Vec<TestCase>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = vec![];
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: TestCase =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(case);
    }
    Ok(out)
}

/// Shared services built from a [`RunConfig`].
pub struct Runtime {
    pub catalog: OperatorCatalog,
    pub operators: Vec<OperatorSpec>,
    pub gateway: LlmGateway,
    pub pool: WorkerPool,
    pub lint_config: LintConfig,
    pub prompts: PromptFactory,
    pub captured: Vec<TestCase>,
    pub generation: ModelParams,
    pub summarizer: ModelParams,
    pub filter: FilterPolicy,
    pub mode: &'static str,
}

impl Runtime {
    pub fn build(cfg: &RunConfig) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(&cfg.catalog)
            .with_context(|| format!("reading catalog {}", cfg.catalog.display()))?;
        let catalog = load_catalog(&text).with_context(|| format!("loading catalog {}", cfg.catalog.display()))?;

        let mut filter = cfg.filter.clone();
        let mut mode = "run";
        if let Some(prior_path) = &cfg.retry_failed_from {
            let prior = RunReport::load(prior_path)?;
            anyhow::ensure!(
                prior.catalog_fingerprint == catalog.fingerprint(),
                "{} was produced from a different catalog",
                prior_path.display()
            );
            let failed = prior.failed_operators();
            filter.include_only = Some(match filter.include_only.take() {
                Some(only) => only.intersection(&failed).cloned().collect(),
                None => failed,
            });
            mode = "retry_failed";
        }
        let operators = filter_operators(&catalog, &filter);

        let lint_config = match &cfg.lint_config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                load_lint_config(&text).with_context(|| format!("loading lint config {}", p.display()))?
            }
            None => default_config(),
        };

        let gateway = match &cfg.llm {
            LlmConfig::Mock { script } => {
                let mock = Arc::new(MockLlm::new(MockScript::load(script)?));
                LlmGateway::new(mock)
            }
            LlmConfig::Http { timeout_secs } => {
                let timeout = Duration::from_secs(*timeout_secs);
                let generator = HttpChatClient::generator_from_env(timeout)?;
                let summarizer = HttpChatClient::summarizer_from_env(timeout)?;
                LlmGateway::new(Arc::new(generator)).with_summarizer(Arc::new(summarizer))
            }
        }
        .with_concurrency_limit(cfg.llm_concurrency);

        let captured = match &cfg.captured_inputs {
            Some(p) => load_captured(p)?,
            None => vec![],
        };
        let mut prompts = PromptFactory::default();
        if let Some(d) = &cfg.device {
            prompts = prompts.with_device(d.clone());
        }
        Ok(Self {
            pool: WorkerPool::new(cfg.workers.pool_config())?,
            catalog,
            operators,
            gateway,
            lint_config,
            prompts,
            captured,
            generation: cfg.generation.resolve()?,
            summarizer: cfg.summarizer.resolve()?,
            filter,
            mode,
        })
    }

    pub fn deps(&self) -> SessionDeps<'_> {
        SessionDeps {
            gateway: &self.gateway,
            lint_config: &self.lint_config,
            prompts: &self.prompts,
            pool: &self.pool,
            dag: self.catalog.dag(),
            generation: &self.generation,
            summarizer: &self.summarizer,
            transcript_dir: None,
        }
    }

    pub fn snapshot(&self, cfg: &RunConfig, mode: &str) -> ConfigSnapshot {
        ConfigSnapshot {
            session: cfg.session.clone(),
            generation_model: self.generation.model_id.clone(),
            summarizer_model: self.summarizer.model_id.clone(),
            linter_enabled: cfg.session.linter_enabled,
            summarization_enabled: cfg.session.summarization_enabled,
            parallelism: cfg.parallelism,
            filter: self.filter.clone(),
            mode: mode.to_string(),
        }
    }

    /// A campaign over the filtered operators. `mode` is stamped into the
    /// report; pass `None` to use the mode implied by the config.
    pub fn campaign(&self, cfg: &RunConfig, mode: Option<&str>) -> Campaign<'_> {
        Campaign {
            run_id: cfg.run_id.clone(),
            catalog_fingerprint: self.catalog.fingerprint().to_string(),
            operators: self.operators.clone(),
            session: cfg.session.clone(),
            snapshot: self.snapshot(cfg, mode.unwrap_or(self.mode)),
            parallelism: cfg.parallelism,
            captured: self.captured.clone(),
            output_dir: Some(cfg.output_dir.clone()),
            allow_overwrite: cfg.overwrite,
            deps: self.deps(),
        }
    }

    pub fn operator_names(&self) -> BTreeSet<String> {
        self.operators.iter().map(|o| o.name.clone()).collect()
    }
}
