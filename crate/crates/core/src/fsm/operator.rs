//! Attempts loop for one operator.

use std::time::{Duration, Instant};

use super::outcome::{AttemptSummary, FailureStage, OperatorResult, OperatorStatus, SessionStatus};
use super::session::{run_session, AttemptContext, SessionConfig, SessionDeps};
use crate::catalog::OperatorSpec;
use crate::prompt::CandidateArtifact;
use crate::protocol::{plan_tests, TestCase};

/// Plans the operator's tests and runs up to `max_attempts` sessions.
pub fn run_operator(
    op: &OperatorSpec,
    config: &SessionConfig,
    deps: SessionDeps<'_>,
    captured: &[TestCase],
) -> OperatorResult {
    match plan_tests(op, config.test_source, captured, config.plan_seed) {
        Ok(plan) => run_operator_with_plan(op, config, deps, &plan, None),
        Err(e) => OperatorResult {
            operator: op.name.clone(),
            status: OperatorStatus::Failure,
            attempts: vec![],
            llm_calls_total: 0,
            calls_to_success: None,
            failure_stage: Some(FailureStage::NoTests),
            infrastructure_failure: false,
            diagnostic: Some(e.to_string()),
            final_artifact: None,
            latest_artifact: None,
        },
    }
}

/// Like [`run_operator`] with a fixed plan. `seed` makes the first session
/// start from an existing candidate.
pub fn run_operator_with_plan(
    op: &OperatorSpec,
    config: &SessionConfig,
    deps: SessionDeps<'_>,
    plan: &[TestCase],
    seed: Option<&CandidateArtifact>,
) -> OperatorResult {
    let deadline_at = (config.deadline_secs > 0).then(|| Instant::now() + Duration::from_secs(config.deadline_secs));
    let mut prior = seed.cloned();
    let mut result = OperatorResult {
        operator: op.name.clone(),
        status: OperatorStatus::Failure,
        attempts: vec![],
        llm_calls_total: 0,
        calls_to_success: None,
        failure_stage: None,
        infrastructure_failure: false,
        diagnostic: None,
        final_artifact: None,
        latest_artifact: prior.clone(),
    };
    for index in 1..=config.max_attempts {
        let out = run_session(op, config, deps, plan, AttemptContext { index, deadline_at }, prior.as_ref());
        result.llm_calls_total += out.llm_calls_used;
        result.attempts.push(AttemptSummary {
            attempt_index: index,
            status: out.status,
            llm_calls_used: out.llm_calls_used,
            initial_prompt: out.initial_prompt,
            failure_stage: out.failure_stage,
        });
        result.failure_stage = out.failure_stage;
        result.diagnostic = out.diagnostic.clone();
        if out.latest_artifact.is_some() {
            result.latest_artifact = out.latest_artifact.clone();
            prior = out.latest_artifact;
        }
        match out.status {
            SessionStatus::Success => {
                result.status = OperatorStatus::Success;
                result.calls_to_success = Some(result.llm_calls_total);
                result.final_artifact = out.final_artifact;
                result.diagnostic = None;
                break;
            }
            SessionStatus::Saturated => {}
            SessionStatus::Failure => {
                let stop = out
                    .failure_stage
                    .is_some_and(|s| s.is_infrastructure() || matches!(s, FailureStage::Deadline | FailureStage::Prompt));
                if stop {
                    result.infrastructure_failure = out.failure_stage.is_some_and(FailureStage::is_infrastructure);
                    break;
                }
            }
        }
    }
    result
}
