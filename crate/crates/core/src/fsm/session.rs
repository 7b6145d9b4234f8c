//! One dialog session: drives the state machine from `InitialPrompt` until
//! it succeeds, fails or asks for a fresh session.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::outcome::{FailureStage, SessionOutcome, SessionStatus};
use super::state::{next_state, Budget, EventKind, FsmEvent, FsmState};
use super::transcript::{Transcript, TranscriptRecord};
use crate::catalog::{DocstringDag, OperatorSpec};
use crate::lint::{lint_source, LintConfig, LintReport, RuleId};
use crate::llm::{BackendError, DialogSession, GatewayError, LlmGateway, ModelParams, SessionTag, SummarySource};
use crate::prompt::{
    parse_response, truncate_log, CandidateArtifact, FeedbackPayload, Prompt, PromptFactory, PromptKind,
    ResponseError, RAW_LOG_LIMIT_CHARS, SUMMARY_TRIGGER_CHARS, WRAPPER_NAME,
};
use crate::prompt::AccuracyPayload;
use crate::protocol::{
    CrashReport, LoadOutcome, TestCase, TestOutcome, TestSourcePolicy, TolerancePolicy, WorkerError, WorkerPool,
};

fn default_calls() -> u32 {
    15
}
fn default_attempts() -> u32 {
    3
}
fn default_true() -> bool {
    true
}
fn default_deadline() -> u64 {
    2 * 60 * 60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default = "default_calls")]
    pub max_llm_calls: u32,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_true")]
    pub linter_enabled: bool,
    #[serde(default = "default_true")]
    pub summarization_enabled: bool,
    #[serde(default)]
    pub tolerance_policy: TolerancePolicy,
    #[serde(default)]
    pub test_source: TestSourcePolicy,
    /// Seed for generated test inputs.
    #[serde(default)]
    pub plan_seed: u64,
    /// Wall-clock cap per operator across all attempts; 0 disables it.
    #[serde(default = "default_deadline")]
    pub deadline_secs: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_llm_calls: default_calls(),
            max_attempts: default_attempts(),
            linter_enabled: true,
            summarization_enabled: true,
            tolerance_policy: TolerancePolicy::default(),
            test_source: TestSourcePolicy::default(),
            plan_seed: 0,
            deadline_secs: default_deadline(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid session config: {0}")]
pub struct InvalidSessionConfig(pub String);

impl SessionConfig {
    pub fn validate(&self) -> Result<(), InvalidSessionConfig> {
        if self.max_llm_calls < 1 {
            return Err(InvalidSessionConfig("max_llm_calls must be at least 1".into()));
        }
        if self.max_attempts < 1 {
            return Err(InvalidSessionConfig("max_attempts must be at least 1".into()));
        }
        self.tolerance_policy
            .validate()
            .map_err(|e| InvalidSessionConfig(e.to_string()))
    }
}

/// Shared services a session borrows. Everything here is safe to share
/// between concurrently running sessions.
#[derive(Clone, Copy)]
pub struct SessionDeps<'a> {
    pub gateway: &'a LlmGateway,
    pub lint_config: &'a LintConfig,
    pub prompts: &'a PromptFactory,
    pub pool: &'a WorkerPool,
    pub dag: &'a DocstringDag,
    pub generation: &'a ModelParams,
    pub summarizer: &'a ModelParams,
    /// Where `<operator>/attempt<N>.log` files go; in memory only when unset.
    pub transcript_dir: Option<&'a Path>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttemptContext {
    /// 1-based.
    pub index: u32,
    pub deadline_at: Option<Instant>,
}

impl AttemptContext {
    pub fn first() -> Self {
        Self { index: 1, deadline_at: None }
    }
}

/// Result of running a candidate against a test plan.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanVerdict {
    Passed { tests: usize },
    CompileError(String),
    TestFailed { case_id: String, payload: AccuracyPayload },
    Crashed { case_id: String, report: CrashReport },
    WorkerLost(String),
}

/// Runs `plan` in order on one leased worker, loading the module once per
/// dtype group and stopping at the first failure.
pub fn execute_plan(
    pool: &WorkerPool,
    module_source: &str,
    plan: &[TestCase],
    policy: &TolerancePolicy,
    log: &mut dyn FnMut(TranscriptRecord),
) -> PlanVerdict {
    let worker = |request: &str, case_id: Option<&str>, outcome: &str, detail: Option<String>| TranscriptRecord::Worker {
        request: request.to_string(),
        case_id: case_id.map(str::to_string),
        outcome: outcome.to_string(),
        detail,
    };
    let mut lease = match pool.lease() {
        Ok(l) => l,
        Err(e) => {
            log(worker("lease", None, "error", Some(e.to_string())));
            return PlanVerdict::WorkerLost(e.to_string());
        }
    };
    let mut loaded_dtype = None;
    for case in plan {
        if loaded_dtype != Some(case.dtype) {
            match lease.load_candidate(module_source) {
                Ok(LoadOutcome::Loaded) => {
                    log(worker("load_candidate", None, "loaded", Some(case.dtype.to_string())));
                    loaded_dtype = Some(case.dtype);
                }
                Ok(LoadOutcome::CompileError(text)) => {
                    log(worker("load_candidate", None, "compile_error", Some(case.dtype.to_string())));
                    return PlanVerdict::CompileError(text);
                }
                Err(WorkerError::Timeout { timeout, .. }) => {
                    log(worker("load_candidate", None, "timeout", None));
                    return PlanVerdict::CompileError(format!(
                        "Compilation did not finish within {} seconds and was aborted.",
                        timeout.as_secs()
                    ));
                }
                Err(e) => {
                    log(worker("load_candidate", None, "lost", Some(e.to_string())));
                    return PlanVerdict::WorkerLost(e.to_string());
                }
            }
        }
        let id = Some(case.case_id.as_str());
        match lease.run_test(case, policy) {
            Ok(TestOutcome::Passed) => log(worker("run_test", id, "passed", None)),
            Ok(TestOutcome::Failed(payload)) => {
                log(worker("run_test", id, "failed", None));
                return PlanVerdict::TestFailed { case_id: case.case_id.clone(), payload };
            }
            Ok(TestOutcome::Crashed(report)) => {
                log(worker("run_test", id, "crashed", Some(report.crash_kind.clone())));
                return PlanVerdict::Crashed { case_id: case.case_id.clone(), report };
            }
            Err(WorkerError::Timeout { timeout, .. }) => {
                log(worker("run_test", id, "timeout", None));
                let raw = format!(
                    "Test {} did not finish within {} seconds; the kernel was terminated.",
                    case.case_id,
                    timeout.as_secs()
                );
                let report = CrashReport::new("timeout", vec![], None, &raw);
                return PlanVerdict::Crashed { case_id: case.case_id.clone(), report };
            }
            Err(e) => {
                log(worker("run_test", id, "lost", Some(e.to_string())));
                return PlanVerdict::WorkerLost(e.to_string());
            }
        }
    }
    PlanVerdict::Passed { tests: plan.len() }
}

/// Runs one session. A saturated context ends the session with
/// [`SessionStatus::Saturated`]; starting the next one is up to the caller.
pub fn run_session(
    op: &OperatorSpec,
    config: &SessionConfig,
    deps: SessionDeps<'_>,
    plan: &[TestCase],
    attempt: AttemptContext,
    prior: Option<&CandidateArtifact>,
) -> SessionOutcome {
    let tag = SessionTag {
        operator: op.name.clone(),
        attempt: attempt.index,
    };
    let transcript = match deps.transcript_dir {
        Some(dir) => Transcript::to_dir(dir, &op.name, attempt.index).unwrap_or_else(|e| {
            tracing::warn!(operator = %op.name, error = %e, "cannot create transcript file");
            Transcript::in_memory()
        }),
        None => Transcript::in_memory(),
    };
    let dialog = DialogSession::new(tag.clone(), deps.generation.clone(), Some(deps.prompts.system_preamble()));
    let runner = Runner {
        op,
        config,
        deps,
        plan,
        attempt,
        prior,
        tag,
        dialog,
        transcript,
        state: FsmState::InitialPrompt,
        calls_used: 0,
        prompt: None,
        current: None,
        latest: prior.cloned(),
        pending: None,
        stage: None,
        diagnostic: None,
        initial_prompt: if prior.is_some() { PromptKind::InitResume } else { PromptKind::Init },
        feedback_kinds: vec![],
        summarizer_calls: 0,
    };
    runner.run()
}

struct Runner<'a> {
    op: &'a OperatorSpec,
    config: &'a SessionConfig,
    deps: SessionDeps<'a>,
    plan: &'a [TestCase],
    attempt: AttemptContext,
    prior: Option<&'a CandidateArtifact>,
    tag: SessionTag,
    dialog: DialogSession,
    transcript: Transcript,
    state: FsmState,
    calls_used: u32,
    /// Next prompt for `GenerateKernel`.
    prompt: Option<Prompt>,
    /// Candidate under evaluation.
    current: Option<CandidateArtifact>,
    latest: Option<CandidateArtifact>,
    pending: Option<FeedbackPayload>,
    stage: Option<FailureStage>,
    diagnostic: Option<String>,
    initial_prompt: PromptKind,
    feedback_kinds: Vec<PromptKind>,
    summarizer_calls: u32,
}

impl Runner<'_> {
    fn run(mut self) -> SessionOutcome {
        self.transcript.push(TranscriptRecord::SessionStart {
            operator: self.op.name.clone(),
            attempt: self.attempt.index,
            max_llm_calls: self.config.max_llm_calls,
            linter_enabled: self.config.linter_enabled,
            summarization_enabled: self.config.summarization_enabled,
            resumed: self.prior.is_some(),
            test_cases: self.plan.len(),
        });
        while !self.state.ends_session() {
            let event = match self.state {
                FsmState::InitialPrompt => self.initial_prompt(),
                FsmState::GenerateKernel => self.generate(),
                FsmState::Lint => self.lint(),
                FsmState::CompileAndTest => self.compile_and_test(),
                FsmState::Feedback => self.feedback_prompt(),
                other => unreachable!("{other:?} ends the session"),
            };
            self.apply(event);
        }
        self.finish()
    }

    fn budget(&self) -> Budget {
        Budget {
            calls_remaining: self.config.max_llm_calls.saturating_sub(self.calls_used),
            attempts_remaining: self.config.max_attempts.saturating_sub(self.attempt.index),
            linter_enabled: self.config.linter_enabled,
        }
    }

    fn past_deadline(&self) -> bool {
        self.attempt.deadline_at.is_some_and(|d| Instant::now() >= d)
    }

    fn deadline_event(&mut self) -> FsmEvent {
        self.stage = Some(FailureStage::Deadline);
        self.diagnostic = Some("per-operator deadline exceeded".into());
        self.transcript.push(TranscriptRecord::Note {
            message: "per-operator deadline exceeded".into(),
        });
        FsmEvent::BudgetExhausted
    }

    fn apply(&mut self, event: FsmEvent) {
        let budget = self.budget();
        let kind = event.kind();
        let to = next_state(self.state, kind, budget);
        self.transcript.push(TranscriptRecord::Transition {
            from: self.state,
            event: kind,
            to,
            budget,
            calls_used: self.calls_used,
        });
        match event {
            FsmEvent::ResponseParsed(a) => {
                self.latest = Some(a.clone());
                self.current = Some(a);
            }
            FsmEvent::ParseFailed(e) => {
                self.stage = Some(FailureStage::Parse);
                self.pending = Some(FeedbackPayload::Lint(format_report(&e)));
            }
            FsmEvent::LintFailed(report) => {
                self.stage = Some(FailureStage::Lint);
                self.pending = Some(FeedbackPayload::Lint(report));
            }
            FsmEvent::CompileFailed(log) => {
                self.stage = Some(FailureStage::Compile);
                self.pending = Some(FeedbackPayload::CompileLog(log));
            }
            FsmEvent::RuntimeCrashed(report) => {
                self.stage = Some(FailureStage::Crash);
                self.pending = Some(FeedbackPayload::Crash(report));
            }
            FsmEvent::TestFailed(payload) => {
                self.stage = Some(FailureStage::Accuracy);
                self.pending = Some(FeedbackPayload::Accuracy(payload));
            }
            FsmEvent::Saturated => self.stage = Some(FailureStage::Saturation),
            FsmEvent::LlmFailed(msg) | FsmEvent::LlmUnavailable(msg) => {
                self.stage = Some(FailureStage::LlmUnavailable);
                self.diagnostic = Some(msg);
            }
            FsmEvent::WorkerLost(msg) => {
                self.stage = Some(FailureStage::WorkerLost);
                self.diagnostic = Some(msg);
            }
            FsmEvent::PromptReady | FsmEvent::LintPassed | FsmEvent::AllTestsPassed | FsmEvent::BudgetExhausted => {}
        }
        self.state = to;
    }

    /// Queues `prompt` for generation unless it would overflow the context.
    fn ready(&mut self, prompt: Prompt) -> FsmEvent {
        if self.dialog.is_saturated(&prompt) {
            self.transcript.push(TranscriptRecord::Note {
                message: format!(
                    "context saturated: {} used + {} next + {} reserved > {}",
                    self.dialog.used_tokens_estimate(),
                    prompt.token_estimate,
                    self.dialog.reserved_output_budget,
                    self.dialog.params.context_length
                ),
            });
            return FsmEvent::Saturated;
        }
        if prompt.kind.is_feedback() {
            self.feedback_kinds.push(prompt.kind);
        }
        self.prompt = Some(prompt);
        FsmEvent::PromptReady
    }

    fn initial_prompt(&mut self) -> FsmEvent {
        match self.deps.prompts.build_initial(self.op, &self.op.dtypes, self.deps.dag, self.prior) {
            Ok(p) => self.ready(p),
            Err(e) => {
                // Not a budget in the usual sense, but it is the event that
                // ends a session from any state.
                self.stage = Some(FailureStage::Prompt);
                self.diagnostic = Some(e.to_string());
                self.transcript.push(TranscriptRecord::Note {
                    message: format!("cannot build initial prompt: {e}"),
                });
                FsmEvent::BudgetExhausted
            }
        }
    }

    fn generate(&mut self) -> FsmEvent {
        if self.past_deadline() {
            return self.deadline_event();
        }
        if self.calls_used >= self.config.max_llm_calls {
            return FsmEvent::BudgetExhausted;
        }
        let prompt = self.prompt.clone().expect("GenerateKernel is entered with a prompt");
        if self.dialog.is_saturated(&prompt) {
            return FsmEvent::Saturated;
        }
        self.calls_used += 1;
        let call = self.calls_used;
        self.transcript.push(TranscriptRecord::LlmRequest {
            call,
            kind: prompt.kind,
            token_estimate: prompt.token_estimate,
            text: prompt.text.clone(),
        });
        match self.deps.gateway.complete(&mut self.dialog, &prompt) {
            Ok(c) => {
                self.transcript.push(TranscriptRecord::LlmResponse {
                    call,
                    attempts: c.log.attempts,
                    text: c.text.clone(),
                    wire: c.wire,
                });
                match parse_response(&c.text) {
                    Ok(a) => FsmEvent::ResponseParsed(a),
                    Err(e) => FsmEvent::ParseFailed(e),
                }
            }
            Err(GatewayError::Saturated { .. }) => FsmEvent::Saturated,
            Err(GatewayError::Failed { error, log }) => {
                self.transcript.push(TranscriptRecord::LlmError {
                    call,
                    attempts: log.attempts,
                    error: error.to_string(),
                });
                match error {
                    BackendError::BadResponse(m) => FsmEvent::LlmFailed(m),
                    other => FsmEvent::LlmUnavailable(other.to_string()),
                }
            }
        }
    }

    fn lint(&mut self) -> FsmEvent {
        let art = self.current.as_ref().expect("Lint follows a parsed response");
        let report = lint_source(&art.module_source, self.deps.lint_config);
        self.transcript.push(TranscriptRecord::Lint {
            pass: report.pass,
            rules: report.rule_ids().iter().map(|r| r.as_str().to_string()).collect(),
            report: report.render(),
        });
        if report.pass {
            FsmEvent::LintPassed
        } else {
            FsmEvent::LintFailed(report)
        }
    }

    fn compile_and_test(&mut self) -> FsmEvent {
        let art = self.current.as_ref().expect("CompileAndTest follows a parsed response");
        if !self.config.linter_enabled {
            if let Some(e) = &art.syntax_error {
                return FsmEvent::CompileFailed(format!("SyntaxError: {} (line {})", e.message, e.line));
            }
            if art.wrapper.is_none() {
                return FsmEvent::CompileFailed(format!(
                    "The module does not define a top-level `{WRAPPER_NAME}` function."
                ));
            }
        }
        if self.past_deadline() {
            return self.deadline_event();
        }
        let source = art.module_source.clone();
        let transcript = &mut self.transcript;
        let verdict = execute_plan(
            self.deps.pool,
            &source,
            self.plan,
            &self.config.tolerance_policy,
            &mut |r| transcript.push(r),
        );
        match verdict {
            PlanVerdict::Passed { .. } => FsmEvent::AllTestsPassed,
            PlanVerdict::CompileError(log) => FsmEvent::CompileFailed(log),
            PlanVerdict::TestFailed { payload, .. } => FsmEvent::TestFailed(payload),
            PlanVerdict::Crashed { report, .. } => FsmEvent::RuntimeCrashed(report),
            PlanVerdict::WorkerLost(m) => FsmEvent::WorkerLost(m),
        }
    }

    fn feedback_prompt(&mut self) -> FsmEvent {
        let payload = self.pending.take().expect("Feedback is entered with a pending payload");
        let payload = match payload {
            FeedbackPayload::CompileLog(log) => FeedbackPayload::CompileLog(self.condition_log(log)),
            other => other,
        };
        let prompt = self.deps.prompts.feedback(&payload);
        self.ready(prompt)
    }

    /// Summarizes long compile logs when enabled, otherwise bounds them.
    fn condition_log(&mut self, log: String) -> String {
        if !self.config.summarization_enabled {
            return truncate_log(&log, RAW_LOG_LIMIT_CHARS);
        }
        let input_chars = log.chars().count();
        if input_chars <= SUMMARY_TRIGGER_CHARS {
            return log;
        }
        let out = self.deps.gateway.summarize_or_truncate(&log, self.deps.summarizer, &self.tag);
        self.summarizer_calls += 1;
        self.transcript.push(TranscriptRecord::Summarize {
            source: match out.source {
                SummarySource::Summarizer => "summarizer",
                SummarySource::TruncatedFallback => "truncated_fallback",
            }
            .to_string(),
            input_chars,
            output_chars: out.text.chars().count(),
            error: out.error.map(|e| e.to_string()),
        });
        out.text
    }

    fn finish(mut self) -> SessionOutcome {
        let status = match self.state {
            FsmState::Success => SessionStatus::Success,
            FsmState::NewSessionRestart => SessionStatus::Saturated,
            _ => SessionStatus::Failure,
        };
        let failure_stage = match status {
            SessionStatus::Success => None,
            SessionStatus::Saturated => Some(FailureStage::Saturation),
            SessionStatus::Failure => self.stage,
        };
        self.transcript.push(TranscriptRecord::SessionEnd {
            status: match status {
                SessionStatus::Success => "success",
                SessionStatus::Failure => "failure",
                SessionStatus::Saturated => "saturated",
            }
            .to_string(),
            calls_used: self.calls_used,
            failure_stage: failure_stage.map(|s| s.as_str().to_string()),
        });
        SessionOutcome {
            status,
            attempt_index: self.attempt.index,
            llm_calls_used: self.calls_used,
            final_artifact: if status == SessionStatus::Success { self.current.take() } else { None },
            latest_artifact: self.latest,
            failure_stage,
            diagnostic: self.diagnostic,
            initial_prompt: self.initial_prompt,
            feedback_kinds: self.feedback_kinds,
            summarizer_calls: self.summarizer_calls,
            transcript: self.transcript.into_records(),
        }
    }
}

/// Format-correction report sent when a response has no usable code block.
pub fn format_report(e: &ResponseError) -> LintReport {
    let msg = match e {
        ResponseError::NoCodeBlock => "No fenced code block found".to_string(),
        other => other.to_string(),
    };
    LintReport::single(RuleId::OutputFormat, msg, 1, None)
}

/// Convenience for transcripts: the event kinds of all transitions.
pub fn transition_events(records: &[TranscriptRecord]) -> Vec<EventKind> {
    records
        .iter()
        .filter_map(|r| match r {
            TranscriptRecord::Transition { event, .. } => Some(*event),
            _ => None,
        })
        .collect()
}
