use std::collections::BTreeSet;
use std::sync::Arc;

use super::*;
use crate::catalog::{DocstringDag, OperatorCategory, OperatorSpec};
use crate::lint::default_config;
use crate::llm::{
    LlmGateway, MockEntry, MockErrorKind, MockLlm, MockScript, ModelParams, OperatorScript, Purpose, RetryPolicy,
};
use crate::prompt::{PromptFactory, PromptKind};
use crate::protocol::mock_worker::{LoadAction, TestAction};
use crate::protocol::{plan_tests, BacktraceFrame, MockRule, MockWorkerScript, PoolConfig, TestCase, WorkerPool, WorkerSpec};
use crate::Dtype;

const EXP: &str = include_str!("../../data/reference/exp.py");

fn exp_with(marker: &str) -> String {
    format!("# {marker}\n{EXP}")
}

fn log1p_module() -> String {
    EXP.replace("tl.exp(", "tl.log1p(")
}

fn op() -> OperatorSpec {
    OperatorSpec {
        name: "exp".into(),
        docstring: "exp(input, *, out=None) -> Tensor\n\nReturns the exponential of the elements of input.".into(),
        referenced_ops: vec![],
        dtypes: BTreeSet::from([Dtype::Float32, Dtype::Float16]),
        test_count: 6,
        tags: BTreeSet::new(),
        category: OperatorCategory::Elementwise,
        samples: vec![],
    }
}

fn worker_script() -> MockWorkerScript {
    MockWorkerScript {
        rules: vec![
            MockRule {
                pattern: "COMPILE_FAIL_LONG".into(),
                operator: None,
                load: LoadAction::CompileError { log: "error: misaligned access\n".repeat(400) },
                test: TestAction::Pass,
            },
            MockRule {
                pattern: "COMPILE_FAIL".into(),
                operator: None,
                load: LoadAction::CompileError { log: "error: unsupported op".into() },
                test: TestAction::Pass,
            },
            MockRule {
                pattern: "ACC_FAIL".into(),
                operator: None,
                load: LoadAction::Ok,
                test: TestAction::Fail { cpu_values: vec![1.0, 2.0], device_values: vec![-1.0, -2.0] },
            },
            MockRule {
                pattern: "CRASH".into(),
                operator: None,
                load: LoadAction::Ok,
                test: TestAction::Crash {
                    crash_kind: "IndexError".into(),
                    frames: vec![BacktraceFrame { function: "kernel".into(), location: "<candidate>:7".into() }],
                    raw: "index out of range".into(),
                },
            },
            MockRule {
                pattern: "WORKER_DIES".into(),
                operator: None,
                load: LoadAction::Ok,
                test: TestAction::Exit { code: 9 },
            },
        ],
        dtypes: None,
    }
}

struct Harness {
    mock: Arc<MockLlm>,
    gateway: LlmGateway,
    lint: crate::lint::LintConfig,
    prompts: PromptFactory,
    pool: WorkerPool,
    dag: DocstringDag,
    params: ModelParams,
    summarizer: ModelParams,
    op: OperatorSpec,
    plan: Vec<TestCase>,
}

impl Harness {
    fn new(script: OperatorScript) -> Self {
        let mock = Arc::new(MockLlm::new(MockScript::for_operator("exp", script)));
        let gateway = LlmGateway::new(mock.clone()).with_retry(RetryPolicy::immediate());
        let op = op();
        let mut dag = DocstringDag::default();
        dag.add_node(&op.name, &op.docstring);
        let plan = plan_tests(&op, Default::default(), &[], 7).unwrap();
        let pool = WorkerPool::new(PoolConfig::uniform(WorkerSpec::InProcessMock { script: worker_script() }, 1)).unwrap();
        Self {
            mock,
            gateway,
            lint: default_config(),
            prompts: PromptFactory::default(),
            pool,
            dag,
            params: ModelParams::cwm(),
            summarizer: ModelParams::summarizer(),
            op,
            plan,
        }
    }

    fn deps(&self) -> SessionDeps<'_> {
        SessionDeps {
            gateway: &self.gateway,
            lint_config: &self.lint,
            prompts: &self.prompts,
            pool: &self.pool,
            dag: &self.dag,
            generation: &self.params,
            summarizer: &self.summarizer,
            transcript_dir: None,
        }
    }

    fn session(&self, config: &SessionConfig) -> SessionOutcome {
        run_session(&self.op, config, self.deps(), &self.plan, AttemptContext::first(), None)
    }

    fn generation_calls(&self) -> usize {
        self.mock.call_count("exp", Purpose::Generate)
    }
}

fn assert_well_formed(out: &SessionOutcome) {
    replay_transitions(&out.transcript).expect("transcript replays");
    assert!(generation_requests_outside_generate(&out.transcript).is_empty());
    if out.status == SessionStatus::Success {
        assert!(out.final_artifact.is_some());
        assert_eq!(transition_events(&out.transcript).last(), Some(&EventKind::AllTestsPassed));
    }
}

#[test]
fn happy_path_single_call() {
    let h = Harness::new(OperatorScript::always(MockEntry::module(EXP)));
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.llm_calls_used, 1);
    assert_eq!(out.initial_prompt, PromptKind::Init);
    assert!(out.feedback_kinds.is_empty());
    assert_well_formed(&out);
    // One load per dtype group, every planned case run.
    let loads = out
        .transcript
        .iter()
        .filter(|r| matches!(r, TranscriptRecord::Worker { request, .. } if request == "load_candidate"))
        .count();
    assert_eq!(loads, 2);
    let tests = out
        .transcript
        .iter()
        .filter(|r| matches!(r, TranscriptRecord::Worker { request, .. } if request == "run_test"))
        .count();
    assert_eq!(tests, h.plan.len());
}

#[test]
fn never_lint_clean_spends_exactly_the_call_budget() {
    let h = Harness::new(OperatorScript::always(MockEntry::module(log1p_module())));
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.status, SessionStatus::Failure);
    assert_eq!(out.llm_calls_used, 15);
    assert_eq!(h.generation_calls(), 15);
    assert_eq!(out.failure_stage, Some(FailureStage::Lint));
    let events = transition_events(&out.transcript);
    assert_eq!(events.iter().filter(|e| **e == EventKind::LintFailed).count(), 15);
    assert_eq!(out.feedback_kinds, vec![PromptKind::LintFeedback; 14]);
    assert_well_formed(&out);
}

#[test]
fn lint_compile_accuracy_then_pass() {
    let h = Harness::new(OperatorScript::sequence([
        MockEntry::module(log1p_module()),
        MockEntry::module(exp_with("COMPILE_FAIL")),
        MockEntry::module(exp_with("ACC_FAIL")),
        MockEntry::module(EXP),
    ]));
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.llm_calls_used, 4);
    assert_eq!(
        out.feedback_kinds,
        vec![PromptKind::LintFeedback, PromptKind::CompileFeedback, PromptKind::AccuracyFeedback]
    );
    assert_well_formed(&out);
}

#[test]
fn crash_feedback_embeds_report() {
    let h = Harness::new(OperatorScript::sequence([MockEntry::module(exp_with("CRASH")), MockEntry::module(EXP)]));
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.feedback_kinds, vec![PromptKind::CrashFeedback]);
    let fb = out
        .transcript
        .iter()
        .find_map(|r| match r {
            TranscriptRecord::LlmRequest { kind: PromptKind::CrashFeedback, text, .. } => Some(text.clone()),
            _ => None,
        })
        .unwrap();
    assert!(fb.contains("Crash kind: IndexError"));
    assert!(fb.contains("kernel at <candidate>:7"));
}

#[test]
fn parse_failure_gets_format_feedback() {
    let h = Harness::new(OperatorScript::sequence([MockEntry::from("I cannot write code today."), MockEntry::module(EXP)]));
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.llm_calls_used, 2);
    assert_eq!(out.feedback_kinds, vec![PromptKind::LintFeedback]);
    let fb = out
        .transcript
        .iter()
        .find_map(|r| match r {
            TranscriptRecord::LlmRequest { call: 2, text, .. } => Some(text.clone()),
            _ => None,
        })
        .unwrap();
    assert!(fb.contains("[output_format] No fenced code block found (line 1)"));
}

#[test]
fn long_compile_log_is_summarized_once_when_enabled() {
    let script = OperatorScript::sequence([MockEntry::module(exp_with("COMPILE_FAIL_LONG")), MockEntry::module(EXP)])
        .with_summary("1. The EXACT error message: misaligned access");
    let h = Harness::new(script);
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.summarizer_calls, 1);
    assert_eq!(h.mock.call_count("exp", Purpose::Summarize), 1);
    let fb = out
        .transcript
        .iter()
        .find_map(|r| match r {
            TranscriptRecord::LlmRequest { kind: PromptKind::CompileFeedback, text, .. } => Some(text.clone()),
            _ => None,
        })
        .unwrap();
    assert!(fb.contains("1. The EXACT error message: misaligned access"));
    assert!(!fb.contains("error: misaligned access\nerror: misaligned access"));
}

#[test]
fn long_compile_log_is_raw_when_summarization_disabled() {
    let script = OperatorScript::sequence([MockEntry::module(exp_with("COMPILE_FAIL_LONG")), MockEntry::module(EXP)])
        .with_summary("should not be used");
    let h = Harness::new(script);
    let config = SessionConfig { summarization_enabled: false, ..Default::default() };
    let out = h.session(&config);
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.summarizer_calls, 0);
    assert_eq!(h.mock.call_count("exp", Purpose::Summarize), 0);
    let fb = out
        .transcript
        .iter()
        .find_map(|r| match r {
            TranscriptRecord::LlmRequest { kind: PromptKind::CompileFeedback, text, .. } => Some(text.clone()),
            _ => None,
        })
        .unwrap();
    assert!(fb.contains(&"error: misaligned access\n".repeat(399)));
}

#[test]
fn short_compile_log_skips_summarizer() {
    let h = Harness::new(OperatorScript::sequence([MockEntry::module(exp_with("COMPILE_FAIL")), MockEntry::module(EXP)]));
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.summarizer_calls, 0);
    assert_eq!(out.feedback_kinds, vec![PromptKind::CompileFeedback]);
}

#[test]
fn linter_disabled_routes_to_compile_and_still_checks_structure() {
    let no_wrapper = EXP.replace("def wrapper(", "def launcher(");
    let h = Harness::new(OperatorScript::sequence([
        MockEntry::module(log1p_module()),
        MockEntry::module(no_wrapper),
        MockEntry::module(EXP),
    ]));
    let config = SessionConfig { linter_enabled: false, ..Default::default() };
    let out = h.session(&config);
    assert_eq!(out.status, SessionStatus::Success);
    // log1p sails through without the linter; the mock worker accepts it.
    assert_eq!(out.llm_calls_used, 1);
    assert!(!transition_events(&out.transcript).contains(&EventKind::LintPassed));

    let h = Harness::new(OperatorScript::sequence([
        MockEntry::module(EXP.replace("def wrapper(", "def launcher(")),
        MockEntry::module(EXP),
    ]));
    let out = h.session(&config);
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.feedback_kinds, vec![PromptKind::CompileFeedback]);
    assert_well_formed(&out);
}

#[test]
fn killed_worker_is_an_infrastructure_failure() {
    let h = Harness::new(OperatorScript::always(MockEntry::module(exp_with("WORKER_DIES"))));
    let result = run_operator(&h.op, &SessionConfig::default(), h.deps(), &[]);
    assert_eq!(result.status, OperatorStatus::Failure);
    assert!(result.infrastructure_failure);
    assert_eq!(result.failure_stage, Some(FailureStage::WorkerLost));
    assert_eq!(result.attempts.len(), 1);
    // The pool recovers for the next operator.
    let h2_out = {
        let mut lease = h.pool.lease().unwrap();
        lease.load_candidate(EXP).unwrap()
    };
    assert_eq!(h2_out, crate::protocol::LoadOutcome::Loaded);
}

#[test]
fn unavailable_llm_fails_without_retrying_attempts() {
    let h = Harness::new(OperatorScript::always(MockEntry::Error {
        error: MockErrorKind::Unavailable,
        message: "down".into(),
    }));
    let result = run_operator(&h.op, &SessionConfig::default(), h.deps(), &[]);
    assert_eq!(result.failure_stage, Some(FailureStage::LlmUnavailable));
    assert!(result.infrastructure_failure);
    assert_eq!(result.attempts.len(), 1);
    assert_eq!(result.llm_calls_total, 1);
}

#[test]
fn bad_responses_consume_calls_and_retry_generation() {
    let h = Harness::new(OperatorScript::sequence([
        MockEntry::Error { error: MockErrorKind::BadResponse, message: "garbled".into() },
        MockEntry::module(EXP),
    ]));
    let out = h.session(&SessionConfig::default());
    assert_eq!(out.status, SessionStatus::Success);
    assert_eq!(out.llm_calls_used, 2);
    assert_well_formed(&out);
}

#[test]
fn all_attempts_fail_within_total_budget() {
    let h = Harness::new(OperatorScript::always(MockEntry::module(log1p_module())));
    let result = run_operator(&h.op, &SessionConfig::default(), h.deps(), &[]);
    assert_eq!(result.status, OperatorStatus::Failure);
    assert_eq!(result.attempts.len(), 3);
    assert_eq!(result.llm_calls_total, 45);
    assert_eq!(h.generation_calls(), 45);
    assert!(!result.infrastructure_failure);
    assert_eq!(result.attempts[0].initial_prompt, PromptKind::Init);
    assert_eq!(result.attempts[1].initial_prompt, PromptKind::InitResume);
}

#[test]
fn first_session_success_records_one_attempt() {
    let h = Harness::new(OperatorScript::always(MockEntry::module(EXP)));
    let result = run_operator(&h.op, &SessionConfig::default(), h.deps(), &[]);
    assert_eq!(result.status, OperatorStatus::Success);
    assert_eq!(result.attempts.len(), 1);
    assert_eq!(result.calls_to_success, Some(1));
}

/// Context sized so a long-winded first answer saturates the session while a
/// fresh resume prompt still fits.
fn saturating_params(h: &Harness, prior: &str) -> ModelParams {
    let resume = h
        .prompts
        .build_initial(&h.op, &h.op.dtypes, &h.dag, Some(&crate::prompt::CandidateArtifact::from_source(prior)))
        .unwrap();
    let system = crate::prompt::token_estimate(&h.prompts.system_preamble());
    ModelParams {
        context_length: system + resume.token_estimate + crate::llm::RESERVED_OUTPUT_BUDGET + 1_500,
        ..ModelParams::cwm()
    }
}

#[test]
fn saturation_twice_then_success_uses_resume() {
    let chatty = format!("{}\n```python\n{}\n```", "Let me think. ".repeat(700), log1p_module());
    let mut h = Harness::new(OperatorScript::sequence([
        MockEntry::from(chatty.as_str()),
        MockEntry::from(chatty.as_str()),
        MockEntry::module(EXP),
    ]));
    h.params = saturating_params(&h, &log1p_module());
    let result = run_operator(&h.op, &SessionConfig::default(), h.deps(), &[]);
    assert_eq!(result.status, OperatorStatus::Success, "{result:?}");
    assert_eq!(result.attempts.len(), 3);
    assert_eq!(result.attempts[0].status, SessionStatus::Saturated);
    assert_eq!(result.attempts[1].status, SessionStatus::Saturated);
    let kinds: Vec<_> = result.attempts.iter().map(|a| a.initial_prompt).collect();
    assert_eq!(kinds, vec![PromptKind::Init, PromptKind::InitResume, PromptKind::InitResume]);
    assert!(result.llm_calls_total <= 45);
    assert_eq!(result.calls_to_success, Some(3));
}

#[test]
fn saturation_on_last_attempt_is_failure() {
    let chatty = format!("{}\n```python\n{}\n```", "Let me think. ".repeat(700), log1p_module());
    let mut h = Harness::new(OperatorScript::always(MockEntry::from(chatty.as_str())));
    h.params = saturating_params(&h, &log1p_module());
    let result = run_operator(&h.op, &SessionConfig::default(), h.deps(), &[]);
    assert_eq!(result.status, OperatorStatus::Failure);
    assert_eq!(result.attempts.len(), 3);
    assert_eq!(result.failure_stage, Some(FailureStage::Saturation));
    assert_eq!(result.llm_calls_total, 3);
}

#[test]
fn transcript_file_matches_memory_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let h = Harness::new(OperatorScript::sequence([MockEntry::module(log1p_module()), MockEntry::module(EXP)]));
        let path = dir.path().join(sub);
        let deps = SessionDeps { transcript_dir: Some(&path), ..h.deps() };
        let out = run_session(&h.op, &SessionConfig::default(), deps, &h.plan, AttemptContext::first(), None);
        let file = log_path(&path, "exp", 1);
        assert_eq!(read_log(&file).unwrap(), out.transcript);
        std::fs::read(file).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn empty_plan_is_reported_without_llm_calls() {
    let h = Harness::new(OperatorScript::always(MockEntry::module(EXP)));
    let config = SessionConfig {
        test_source: crate::protocol::TestSourcePolicy::CapturedInputs,
        ..Default::default()
    };
    let result = run_operator(&h.op, &config, h.deps(), &[]);
    assert_eq!(result.failure_stage, Some(FailureStage::NoTests));
    assert_eq!(h.generation_calls(), 0);
}

#[test]
fn expired_deadline_stops_before_generation() {
    let h = Harness::new(OperatorScript::always(MockEntry::module(EXP)));
    let ctx = AttemptContext { index: 1, deadline_at: Some(std::time::Instant::now()) };
    let out = run_session(&h.op, &SessionConfig::default(), h.deps(), &h.plan, ctx, None);
    assert_eq!(out.status, SessionStatus::Failure);
    assert_eq!(out.failure_stage, Some(FailureStage::Deadline));
    assert_eq!(out.llm_calls_used, 0);
    assert_well_formed(&out);
}

#[test]
fn config_validation() {
    assert!(SessionConfig::default().validate().is_ok());
    assert!(SessionConfig { max_llm_calls: 0, ..Default::default() }.validate().is_err());
    assert!(SessionConfig { max_attempts: 0, ..Default::default() }.validate().is_err());
    let parsed: SessionConfig = toml::from_str("linter_enabled = false").unwrap();
    assert_eq!(parsed.max_llm_calls, 15);
    assert!(!parsed.linter_enabled);
}
