//! Run reports, the incremental record stream and report persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{FilterPolicy, OperatorCategory, OperatorSpec};
use crate::fsm::{AttemptSummary, FailureStage, OperatorResult, OperatorStatus, SessionConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub operator: String,
    pub category: OperatorCategory,
    pub status: OperatorStatus,
    pub llm_calls_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls_to_success: Option<u32>,
    pub attempts: Vec<AttemptSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_stage: Option<FailureStage>,
    #[serde(default)]
    pub infrastructure_failure: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// Passed by replaying a stored candidate, without any new session.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub replayed: bool,
    /// The first session started from a stored candidate.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub seeded: bool,
}

impl OperatorRecord {
    pub fn from_result(op: &OperatorSpec, r: &OperatorResult) -> Self {
        Self {
            operator: op.name.clone(),
            category: op.category,
            status: r.status,
            llm_calls_used: r.llm_calls_total,
            calls_to_success: r.calls_to_success,
            attempts: r.attempts.clone(),
            failure_stage: r.failure_stage,
            infrastructure_failure: r.infrastructure_failure,
            diagnostic: r.diagnostic.clone(),
            replayed: false,
            seeded: false,
        }
    }

    /// Record for a session task that panicked.
    pub fn panicked(op: &OperatorSpec, message: &str) -> Self {
        Self {
            operator: op.name.clone(),
            category: op.category,
            status: OperatorStatus::Failure,
            llm_calls_used: 0,
            calls_to_success: None,
            attempts: vec![],
            failure_stage: Some(FailureStage::Panic),
            infrastructure_failure: true,
            diagnostic: Some(format!("session task panicked: {message}")),
            replayed: false,
            seeded: false,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == OperatorStatus::Success
    }
}

/// Settings stamped into every report so ablations compare by joining reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub session: SessionConfig,
    pub generation_model: String,
    pub summarizer_model: String,
    pub linter_enabled: bool,
    pub summarization_enabled: bool,
    pub parallelism: usize,
    pub filter: FilterPolicy,
    /// `run`, `refine` or `retry_failed`.
    pub mode: String,
}

impl ConfigSnapshot {
    /// Calls an operator can spend in total; the curve's x range.
    pub fn max_calls(&self) -> u32 {
        self.session.max_attempts * self.session.max_llm_calls
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub operators: usize,
    pub passed: usize,
    pub failed: usize,
    pub infrastructure_failures: usize,
    pub coverage: f64,
    pub llm_calls_total: u64,
}

impl Totals {
    pub fn of(records: &[OperatorRecord]) -> Self {
        let passed = records.iter().filter(|r| r.passed()).count();
        Self {
            operators: records.len(),
            passed,
            failed: records.len() - passed,
            infrastructure_failures: records.iter().filter(|r| r.infrastructure_failure).count(),
            coverage: fraction(passed, records.len()),
            llm_calls_total: records.iter().map(|r| u64::from(r.llm_calls_used)).sum(),
        }
    }
}

pub(crate) fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Canonical, timestamp-free run result. Wall-clock data lives in
/// [`Timings`], written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub run_id: String,
    pub catalog_fingerprint: String,
    pub config: ConfigSnapshot,
    /// Sorted by operator name.
    pub operators: Vec<OperatorRecord>,
    pub totals: Totals,
    /// Set when scheduling stopped early (every worker retired).
    #[serde(default)]
    pub incomplete: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_run: Vec<String>,
}

impl RunReport {
    pub fn new(
        run_id: impl Into<String>,
        catalog_fingerprint: impl Into<String>,
        config: ConfigSnapshot,
        mut operators: Vec<OperatorRecord>,
        mut not_run: Vec<String>,
    ) -> Self {
        operators.sort_by(|a, b| a.operator.cmp(&b.operator));
        not_run.sort();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            run_id: run_id.into(),
            catalog_fingerprint: catalog_fingerprint.into(),
            config,
            totals: Totals::of(&operators),
            operators,
            incomplete: !not_run.is_empty(),
            not_run,
        }
    }

    pub fn get(&self, operator: &str) -> Option<&OperatorRecord> {
        self.operators
            .binary_search_by(|r| r.operator.as_str().cmp(operator))
            .ok()
            .map(|i| &self.operators[i])
    }

    pub fn failed_operators(&self) -> BTreeSet<String> {
        self.operators
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.operator.clone())
            .chain(self.not_run.iter().cloned())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading report {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("parsing report {}: {e}", path.display()))
    }
}

/// Wall-clock data kept out of the canonical report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timings {
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
    pub per_operator_secs: BTreeMap<String, f64>,
    pub max_in_flight: usize,
    pub worker_respawns: u64,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum RecordLine {
    Start {
        run_id: String,
        catalog_fingerprint: String,
        config: Box<ConfigSnapshot>,
        operators: Vec<String>,
    },
    Operator(Box<OperatorRecord>),
}

/// Append-only writer for `records.jsonl`; one writer per run.
pub struct RecordSink {
    file: Option<File>,
}

impl RecordSink {
    pub fn disabled() -> Self {
        Self { file: None }
    }

    pub fn create(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(Self {
            file: Some(File::create(path)?),
        })
    }

    pub fn write(&mut self, line: &RecordLine) -> std::io::Result<()> {
        if let Some(f) = &mut self.file {
            let mut text = serde_json::to_string(line).expect("record lines serialize");
            text.push('\n');
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}

/// Rebuilds a report from `records.jsonl`. Operators announced in the start
/// line without a record become `not_run`. A torn final line is ignored.
pub fn recover_report(path: &Path) -> anyhow::Result<RunReport> {
    let file = File::open(path).map_err(|e| anyhow::anyhow!("opening {}: {e}", path.display()))?;
    let mut start = None;
    let mut records: BTreeMap<String, OperatorRecord> = BTreeMap::new();
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RecordLine>(line) {
            Ok(RecordLine::Start { run_id, catalog_fingerprint, config, operators }) => {
                start = Some((run_id, catalog_fingerprint, config, operators))
            }
            Ok(RecordLine::Operator(r)) => {
                records.insert(r.operator.clone(), *r);
            }
            Err(e) if i == last => tracing::warn!(error = %e, "ignoring torn final record"),
            Err(e) => anyhow::bail!("{}:{}: {e}", path.display(), i + 1),
        }
    }
    let (run_id, fingerprint, config, operators) =
        start.ok_or_else(|| anyhow::anyhow!("{} has no start record", path.display()))?;
    let not_run = operators.into_iter().filter(|o| !records.contains_key(o)).collect();
    Ok(RunReport::new(run_id, fingerprint, *config, records.into_values().collect(), not_run))
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
