//! Fans operators out over a bounded set of session threads.

use std::any::Any;
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;

use super::artifacts::{sha256_hex, ArtifactMeta, ArtifactStore};
use super::render::write_run_outputs;
use super::report::{ConfigSnapshot, OperatorRecord, RecordLine, RecordSink, RunReport, Timings};
use crate::catalog::OperatorSpec;
use crate::fsm::{
    execute_plan, run_operator, run_operator_with_plan, FailureStage, OperatorResult, OperatorStatus, PlanVerdict,
    SessionConfig, SessionDeps,
};
use crate::lint::{lint_source, LintConfig, LintReport};
use crate::prompt::CandidateArtifact;
use crate::protocol::{plan_tests, TestCase, TestSourcePolicy, TolerancePolicy, WorkerPool};

/// Everything one campaign needs besides the shared services in `deps`.
pub struct Campaign<'a> {
    pub run_id: String,
    pub catalog_fingerprint: String,
    /// Already filtered; each gets exactly one job.
    pub operators: Vec<OperatorSpec>,
    pub session: SessionConfig,
    pub snapshot: ConfigSnapshot,
    pub parallelism: usize,
    pub captured: Vec<TestCase>,
    /// Base output directory. Run files go to `<dir>/runs/<run_id>/`,
    /// accepted candidates to `<dir>/artifacts/`.
    pub output_dir: Option<PathBuf>,
    pub allow_overwrite: bool,
    pub deps: SessionDeps<'a>,
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'s> {
    /// Fresh sessions for every operator.
    Run,
    /// Replay stored candidates on captured-input plans first; sessions
    /// (seeded with the stored candidate when one exists) only for failures.
    Refine { store: &'s ArtifactStore },
}

pub struct DispatchOutput {
    pub report: RunReport,
    pub timings: Timings,
    pub run_dir: Option<PathBuf>,
}

impl Campaign<'_> {
    pub fn run_dir(&self) -> Option<PathBuf> {
        self.output_dir.as_ref().map(|d| d.join("runs").join(&self.run_id))
    }

    pub fn artifact_store(&self) -> Option<ArtifactStore> {
        self.output_dir.as_ref().map(|d| ArtifactStore::new(d.join("artifacts")))
    }
}

fn panic_message(p: &(dyn Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

pub struct ExecStats {
    pub max_in_flight: usize,
    pub not_run: Vec<String>,
}

/// Runs `job` for every operator on at most `parallelism` threads. A panic
/// in one job becomes a [`FailureStage::Panic`] record. `stop` is polled
/// before each job starts; operators never started are returned in
/// `not_run`. `on_record` is called on the calling thread only.
pub fn execute_jobs(
    ops: &[OperatorSpec],
    parallelism: usize,
    stop: &(dyn Fn() -> bool + Sync),
    job: &(dyn Fn(&OperatorSpec) -> OperatorRecord + Sync),
    on_record: &mut dyn FnMut(OperatorRecord, f64),
) -> ExecStats {
    let next = AtomicUsize::new(0);
    let in_flight = AtomicUsize::new(0);
    let max_in_flight = AtomicUsize::new(0);
    let mut done = BTreeSet::new();
    let threads = parallelism.max(1).min(ops.len().max(1));
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        for t in 0..threads {
            let tx = tx.clone();
            let (next, in_flight, max_in_flight) = (&next, &in_flight, &max_in_flight);
            std::thread::Builder::new()
                .name(format!("session-{t}"))
                .spawn_scoped(s, move || loop {
                    if stop() {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(op) = ops.get(i) else { break };
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    max_in_flight.fetch_max(now, Ordering::SeqCst);
                    let started = Instant::now();
                    let record = catch_unwind(AssertUnwindSafe(|| job(op))).unwrap_or_else(|p| {
                        let msg = panic_message(p.as_ref());
                        tracing::error!(operator = %op.name, panic = %msg, "session task panicked");
                        OperatorRecord::panicked(op, &msg)
                    });
                    in_flight.fetch_sub(1, Ordering::SeqCst);
                    if tx.send((i, record, started.elapsed().as_secs_f64())).is_err() {
                        break;
                    }
                })
                .expect("spawning a session thread");
        }
        drop(tx);
        for (i, record, secs) in rx {
            done.insert(i);
            on_record(record, secs);
        }
    });
    ExecStats {
        max_in_flight: max_in_flight.load(Ordering::SeqCst),
        not_run: ops
            .iter()
            .enumerate()
            .filter(|(i, _)| !done.contains(i))
            .map(|(_, o)| o.name.clone())
            .collect(),
    }
}

/// Lint plus plan execution for an existing candidate.
#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub lint: LintReport,
    /// `None` when lint failed and nothing was executed.
    pub verdict: Option<PlanVerdict>,
}

impl ReplayResult {
    pub fn passed(&self) -> bool {
        self.lint.pass && matches!(self.verdict, Some(PlanVerdict::Passed { .. }))
    }
}

pub fn replay_artifact(
    source: &str,
    plan: &[TestCase],
    pool: &WorkerPool,
    lint_config: &LintConfig,
    policy: &TolerancePolicy,
) -> ReplayResult {
    let lint = lint_source(source, lint_config);
    let verdict = lint.pass.then(|| execute_plan(pool, source, plan, policy, &mut |_| {}));
    ReplayResult { lint, verdict }
}

fn save_artifact(store: &ArtifactStore, campaign: &Campaign<'_>, result: &OperatorResult) {
    let Some(art) = &result.final_artifact else { return };
    let meta = ArtifactMeta {
        operator: result.operator.clone(),
        run_id: campaign.run_id.clone(),
        catalog_fingerprint: campaign.catalog_fingerprint.clone(),
        source_sha256: sha256_hex(&art.module_source),
        calls_to_success: result.calls_to_success,
        attempts: result.attempts.len() as u32,
    };
    if let Err(e) = store.save(&meta, &art.module_source) {
        tracing::warn!(operator = %result.operator, error = %e, "cannot store accepted candidate");
    }
}

fn no_tests(op: &OperatorSpec, why: String) -> OperatorRecord {
    OperatorRecord {
        operator: op.name.clone(),
        category: op.category,
        status: OperatorStatus::Failure,
        llm_calls_used: 0,
        calls_to_success: None,
        attempts: vec![],
        failure_stage: Some(FailureStage::NoTests),
        infrastructure_failure: false,
        diagnostic: Some(why),
        replayed: false,
        seeded: false,
    }
}

fn refine_job(campaign: &Campaign<'_>, deps: SessionDeps<'_>, source_store: &ArtifactStore, op: &OperatorSpec) -> (OperatorRecord, Option<OperatorResult>) {
    let plan = match plan_tests(op, TestSourcePolicy::CapturedInputs, &campaign.captured, campaign.session.plan_seed) {
        Ok(p) => p,
        Err(e) => return (no_tests(op, e.to_string()), None),
    };
    let stored = source_store.best(&op.name);
    if let Some(s) = &stored {
        let replay = replay_artifact(&s.source, &plan, deps.pool, deps.lint_config, &campaign.session.tolerance_policy);
        if replay.passed() {
            let record = OperatorRecord {
                operator: op.name.clone(),
                category: op.category,
                status: OperatorStatus::Success,
                llm_calls_used: 0,
                calls_to_success: s.meta.calls_to_success,
                attempts: vec![],
                failure_stage: None,
                infrastructure_failure: false,
                diagnostic: None,
                replayed: true,
                seeded: false,
            };
            return (record, None);
        }
        if let Some(PlanVerdict::WorkerLost(m)) = &replay.verdict {
            let mut r = no_tests(op, m.clone());
            r.failure_stage = Some(FailureStage::WorkerLost);
            r.infrastructure_failure = true;
            return (r, None);
        }
    }
    let seed = stored.as_ref().map(|s| CandidateArtifact::from_source(&s.source));
    let result = run_operator_with_plan(op, &campaign.session, deps, &plan, seed.as_ref());
    let mut record = OperatorRecord::from_result(op, &result);
    record.seeded = seed.is_some();
    (record, Some(result))
}

/// Runs a campaign, streaming per-operator records to `records.jsonl` and
/// writing the final report atomically.
pub fn dispatch(campaign: &Campaign<'_>, mode: Mode<'_>) -> anyhow::Result<DispatchOutput> {
    anyhow::ensure!(campaign.parallelism >= 1, "parallelism must be at least 1");
    campaign.session.validate()?;
    let run_dir = campaign.run_dir();
    if let Some(dir) = &run_dir {
        let report_path = dir.join("report.json");
        anyhow::ensure!(
            campaign.allow_overwrite || !report_path.exists(),
            "run id {} already has a report at {}",
            campaign.run_id,
            report_path.display()
        );
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut sink = match &run_dir {
        Some(dir) => RecordSink::create(&dir.join("records.jsonl"))?,
        None => RecordSink::disabled(),
    };
    sink.write(&RecordLine::Start {
        run_id: campaign.run_id.clone(),
        catalog_fingerprint: campaign.catalog_fingerprint.clone(),
        config: Box::new(campaign.snapshot.clone()),
        operators: campaign.operators.iter().map(|o| o.name.clone()).collect(),
    })?;

    let deps = SessionDeps {
        transcript_dir: run_dir.as_deref(),
        ..campaign.deps
    };
    let store = campaign.artifact_store();
    let pool = deps.pool;
    let stop = || pool.live_workers() == 0;
    let job = |op: &OperatorSpec| -> OperatorRecord {
        let (record, result) = match mode {
            Mode::Run => {
                let r = run_operator(op, &campaign.session, deps, &campaign.captured);
                (OperatorRecord::from_result(op, &r), Some(r))
            }
            Mode::Refine { store } => refine_job(campaign, deps, store, op),
        };
        if let (Some(store), Some(result)) = (&store, &result) {
            save_artifact(store, campaign, result);
        }
        record
    };

    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let mut records = Vec::with_capacity(campaign.operators.len());
    let mut timings = Timings {
        started_unix_secs: started_unix,
        ..Timings::default()
    };
    let mut sink_error = None;
    let stats = execute_jobs(&campaign.operators, campaign.parallelism, &stop, &job, &mut |record, secs| {
        tracing::info!(
            operator = %record.operator,
            status = ?record.status,
            calls = record.llm_calls_used,
            "operator finished"
        );
        if let Err(e) = sink.write(&RecordLine::Operator(Box::new(record.clone()))) {
            sink_error.get_or_insert(e);
        }
        timings.per_operator_secs.insert(record.operator.clone(), secs);
        records.push(record);
    });
    if let Some(e) = sink_error {
        tracing::warn!(error = %e, "records.jsonl is incomplete");
    }
    if !stats.not_run.is_empty() {
        tracing::error!(count = stats.not_run.len(), "worker pool lost; report is incomplete");
    }
    timings.wall_clock_secs = clock.elapsed().as_secs_f64();
    timings.max_in_flight = stats.max_in_flight;
    timings.worker_respawns = pool.respawn_count();
    let report = RunReport::new(
        campaign.run_id.clone(),
        campaign.catalog_fingerprint.clone(),
        campaign.snapshot.clone(),
        records,
        stats.not_run,
    );
    if let Some(dir) = &run_dir {
        write_run_outputs(dir, &report, &timings)?;
    }
    Ok(DispatchOutput { report, timings, run_dir })
}

/// `dispatch` in [`Mode::Run`].
pub fn dispatch_run(campaign: &Campaign<'_>) -> anyhow::Result<DispatchOutput> {
    dispatch(campaign, Mode::Run)
}

/// Location of a run's canonical report under an output directory.
pub fn report_path(output_dir: &Path, run_id: &str) -> PathBuf {
    output_dir.join("runs").join(run_id).join("report.json")
}
