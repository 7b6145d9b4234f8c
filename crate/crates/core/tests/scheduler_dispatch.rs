//! End-to-end campaign runs against the scripted LLM and in-process mock workers.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use opforge_core::catalog::{FilterPolicy, OperatorCatalog, OperatorCategory, OperatorSpec};
use opforge_core::fsm::{FailureStage, OperatorStatus, SessionConfig, SessionDeps};
use opforge_core::lint::default_config;
use opforge_core::llm::{
    BackendError, ChatBackend, ChatReply, ChatRequest, LlmGateway, MockEntry, MockLlm, MockScript, ModelParams,
    OperatorScript, RetryPolicy,
};
use opforge_core::prompt::PromptFactory;
use opforge_core::protocol::mock_worker::{LoadAction, TestAction};
use opforge_core::protocol::{
    plan_tests, Distribution, MockRule, MockWorkerScript, PoolConfig, TensorLiteral, TestCase, TestSource,
    TestSourcePolicy, WorkerPool, WorkerSpec,
};
use opforge_core::scheduler::{
    aggregate_runs, dispatch, dispatch_run, recover_report, ArtifactStore, Campaign, ConfigSnapshot, Mode,
    RunReport,
};
use opforge_core::Dtype;

const EXP: &str = include_str!("../data/reference/exp.py");

fn good(op: &str) -> String {
    format!("# candidate for {op}\n{EXP}")
}

fn bad() -> String {
    EXP.replace("tl.exp(", "tl.log1p(")
}

fn ops(n: usize) -> Vec<OperatorSpec> {
    (0..n)
        .map(|i| OperatorSpec {
            name: format!("op{i:02}"),
            docstring: format!("op{i:02}(input) -> Tensor\n\nSynthetic operator {i}."),
            referenced_ops: vec![],
            dtypes: BTreeSet::from([Dtype::Float32]),
            test_count: 3,
            tags: BTreeSet::new(),
            category: if i % 2 == 0 { OperatorCategory::Elementwise } else { OperatorCategory::Reduction },
            samples: vec![],
        })
        .collect()
}

struct Env {
    catalog: OperatorCatalog,
    gateway: LlmGateway,
    pool: WorkerPool,
    lint: opforge_core::lint::LintConfig,
    prompts: PromptFactory,
    params: ModelParams,
}

impl Env {
    fn new(n: usize, backend: Arc<dyn ChatBackend>, workers: usize, worker_script: MockWorkerScript) -> Self {
        let catalog = OperatorCatalog::from_specs(ops(n), vec![]).unwrap();
        let pool = WorkerPool::new(PoolConfig::uniform(WorkerSpec::InProcessMock { script: worker_script }, workers)).unwrap();
        Self {
            catalog,
            gateway: LlmGateway::new(backend).with_retry(RetryPolicy::immediate()),
            pool,
            lint: default_config(),
            prompts: PromptFactory::default(),
            params: ModelParams::cwm(),
        }
    }

    fn deps(&self) -> SessionDeps<'_> {
        SessionDeps {
            gateway: &self.gateway,
            lint_config: &self.lint,
            prompts: &self.prompts,
            pool: &self.pool,
            dag: self.catalog.dag(),
            generation: &self.params,
            summarizer: &self.params,
            transcript_dir: None,
        }
    }

    fn campaign(&self, run_id: &str, parallelism: usize, out: Option<&std::path::Path>) -> Campaign<'_> {
        let session = SessionConfig { max_llm_calls: 3, max_attempts: 1, ..Default::default() };
        Campaign {
            run_id: run_id.into(),
            catalog_fingerprint: self.catalog.fingerprint().into(),
            operators: self.catalog.operators().cloned().collect(),
            snapshot: ConfigSnapshot {
                session: session.clone(),
                generation_model: "cwm".into(),
                summarizer_model: "cwm".into(),
                linter_enabled: true,
                summarization_enabled: true,
                parallelism,
                filter: FilterPolicy::default(),
                mode: "run".into(),
            },
            session,
            parallelism,
            captured: vec![],
            output_dir: out.map(|p| p.to_path_buf()),
            allow_overwrite: false,
            deps: self.deps(),
        }
    }
}

/// Operators whose index is in `pass` get a clean candidate, the rest a
/// candidate that never lints.
fn script(n: usize, pass: impl Fn(usize) -> bool) -> MockScript {
    let mut s = MockScript::default();
    for i in 0..n {
        let name = format!("op{i:02}");
        let entry = if pass(i) { MockEntry::module(good(&name)) } else { MockEntry::module(bad()) };
        s = s.with_operator(name, OperatorScript::always(entry));
    }
    s
}

#[test]
fn seven_of_ten_pass() {
    let mock = Arc::new(MockLlm::new(script(10, |i| i < 7)));
    let env = Env::new(10, mock, 2, MockWorkerScript::default());
    let out = dispatch_run(&env.campaign("r", 3, None)).unwrap();
    assert_eq!(out.report.operators.len(), 10);
    assert_eq!(out.report.totals.passed, 7);
    assert_eq!(out.report.totals.coverage, 0.7);
    assert_eq!(out.report.totals.infrastructure_failures, 0);
}

/// Counts concurrent backend calls and sleeps a pseudo-random time in each.
struct Gauge {
    inner: MockLlm,
    now: AtomicUsize,
    max: AtomicUsize,
}

impl ChatBackend for Gauge {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, BackendError> {
        let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
        self.max.fetch_max(n, Ordering::SeqCst);
        let h = request.tag.operator.bytes().fold(7u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
        std::thread::sleep(Duration::from_millis(5 + h % 25));
        let r = self.inner.chat(request);
        self.now.fetch_sub(1, Ordering::SeqCst);
        r
    }
}

#[test]
fn parallelism_bound_holds() {
    let gauge = Arc::new(Gauge {
        inner: MockLlm::new(script(24, |i| i % 3 != 0)),
        now: AtomicUsize::new(0),
        max: AtomicUsize::new(0),
    });
    let env = Env::new(24, gauge.clone(), 8, MockWorkerScript::default());
    let out = dispatch_run(&env.campaign("r", 4, None)).unwrap();
    assert_eq!(out.report.operators.len(), 24);
    assert!(gauge.max.load(Ordering::SeqCst) <= 4);
    assert!(out.timings.max_in_flight <= 4);
    assert!(out.timings.max_in_flight >= 2, "expected some overlap");
}

#[test]
fn panicking_session_is_isolated() {
    let s = script(10, |_| true).with_operator("op04", OperatorScript::always(MockEntry::Panic { panic: "boom".into() }));
    let env = Env::new(10, Arc::new(MockLlm::new(s)), 2, MockWorkerScript::default());
    let out = dispatch_run(&env.campaign("r", 4, None)).unwrap();
    let r = &out.report;
    assert_eq!(r.operators.len(), 10);
    assert_eq!(r.totals.passed, 9);
    assert_eq!(r.totals.infrastructure_failures, 1);
    let op4 = r.get("op04").unwrap();
    assert_eq!(op4.failure_stage, Some(FailureStage::Panic));
    assert!(op4.diagnostic.as_deref().unwrap().contains("boom"));
}

#[test]
fn identical_inputs_give_identical_reports_and_recoverable_records() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let env = Env::new(12, Arc::new(MockLlm::new(script(12, |i| i % 4 != 1))), 3, MockWorkerScript::default());
        let out = dispatch_run(&env.campaign("det", 4, Some(&dir.path().join(sub)))).unwrap();
        let run_dir = out.run_dir.unwrap();
        let recovered = recover_report(&run_dir.join("records.jsonl")).unwrap();
        assert_eq!(recovered, out.report);
        for f in ["report.json", "timings.json", "operators.csv", "coverage_by_category.csv", "curve.csv", "summary.txt"] {
            assert!(run_dir.join(f).exists(), "{f}");
        }
        assert!(run_dir.join("op00/attempt1.log").exists());
        std::fs::read(run_dir.join("report.json")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let report: RunReport = serde_json::from_slice(&a).unwrap();
    assert_eq!(report.totals.passed, 9);
    // Accepted candidates land in the artifact store.
    let store = ArtifactStore::new(dir.path().join("a/artifacts"));
    assert_eq!(store.runs("op00"), vec!["det"]);
    assert!(store.runs("op01").is_empty());
}

#[test]
fn existing_run_id_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let env = Env::new(2, Arc::new(MockLlm::new(script(2, |_| true))), 1, MockWorkerScript::default());
    dispatch_run(&env.campaign("dup", 1, Some(dir.path()))).unwrap();
    assert!(dispatch_run(&env.campaign("dup", 1, Some(dir.path()))).is_err());
}

#[test]
fn total_pool_loss_yields_incomplete_report() {
    let env = Env::new(6, Arc::new(MockLlm::new(script(6, |_| true))), 1, MockWorkerScript::default());
    // A worker that cannot be spawned retires its slot on first use.
    let env = Env {
        pool: WorkerPool::new(PoolConfig {
            max_restarts_per_worker: 0,
            ..PoolConfig::uniform(WorkerSpec::Command { program: "/nonexistent/worker".into(), args: vec![] }, 1)
        })
        .unwrap(),
        ..env
    };
    let out = dispatch_run(&env.campaign("r", 1, None)).unwrap();
    let r = &out.report;
    assert!(r.incomplete);
    assert_eq!(r.operators.len() + r.not_run.len(), 6);
    assert!(r.operators.iter().all(|o| o.failure_stage == Some(FailureStage::WorkerLost)));
}

fn captured_case(op: &str) -> TestCase {
    TestCase {
        case_id: format!("{op}/captured/0"),
        operator: op.into(),
        dtype: Dtype::Float32,
        input_tensors: vec![TensorLiteral::Seeded {
            seed: 1,
            dtype: Dtype::Float32,
            shape: vec![128, 3],
            distribution: Distribution::Normal { mean: 0.0, std: 1.0 },
        }],
        input_args: vec![],
        input_kwargs: Default::default(),
        source: TestSource::Captured,
    }
}

#[test]
fn refine_replays_then_seeds_failures() {
    let dir = tempfile::tempdir().unwrap();
    // Run 1: op00..op03 pass and are stored.
    let env = Env::new(4, Arc::new(MockLlm::new(script(4, |_| true))), 1, MockWorkerScript::default());
    dispatch_run(&env.campaign("opinfo", 2, Some(dir.path()))).unwrap();
    let store = ArtifactStore::new(dir.path().join("artifacts"));

    // On captured inputs, op01's stored candidate fails accuracy; the model
    // then fixes it when resumed.
    let worker = MockWorkerScript {
        rules: vec![MockRule {
            pattern: "candidate for op01".into(),
            operator: None,
            load: LoadAction::Ok,
            test: TestAction::Fail { cpu_values: vec![1.0], device_values: vec![2.0] },
        }],
        dtypes: None,
    };
    let s = script(4, |_| true).with_operator("op01", OperatorScript::always(MockEntry::module(EXP)));
    let mock = Arc::new(MockLlm::new(s));
    let env = Env::new(4, mock.clone(), 1, worker);
    let mut c = env.campaign("mis", 2, Some(dir.path()));
    c.captured = ["op00", "op01", "op02"].iter().map(|o| captured_case(o)).collect();
    let out = dispatch(&c, Mode::Refine { store: &store }).unwrap();
    let r = &out.report;
    assert!(r.get("op00").unwrap().replayed);
    assert!(r.get("op02").unwrap().replayed);
    let op01 = r.get("op01").unwrap();
    assert!(op01.seeded && !op01.replayed);
    assert_eq!(op01.status, OperatorStatus::Success);
    assert_eq!(op01.attempts[0].initial_prompt, opforge_core::prompt::PromptKind::InitResume);
    assert_eq!(r.get("op03").unwrap().failure_stage, Some(FailureStage::NoTests));
    // Only the seeded session talked to the model.
    let calls: BTreeSet<String> = mock.calls().into_iter().map(|c| c.operator).collect();
    assert_eq!(calls, BTreeSet::from(["op01".to_string()]));

    // Union of the two runs.
    let first = RunReport::load(&dir.path().join("runs/opinfo/report.json")).unwrap();
    let agg = aggregate_runs(&[first, r.clone()]).unwrap();
    assert_eq!(agg.passed, 4);
}

#[test]
fn captured_plans_use_only_matching_cases() {
    let op = &ops(1)[0];
    let cases = vec![captured_case("op00"), captured_case("other")];
    let plan = plan_tests(op, TestSourcePolicy::CapturedInputs, &cases, 0).unwrap();
    assert_eq!(plan.len(), 1);
}
