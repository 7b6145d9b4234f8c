//! Per-operator generation state machine: states and the transition
//! function, the session driver, the attempts loop and session transcripts.

mod operator;
mod outcome;
mod session;
mod state;
mod transcript;

pub use operator::{run_operator, run_operator_with_plan};
pub use outcome::{AttemptSummary, FailureStage, OperatorResult, OperatorStatus, SessionOutcome, SessionStatus};
pub use session::{
    execute_plan, format_report, run_session, transition_events, AttemptContext, InvalidSessionConfig, PlanVerdict,
    SessionConfig, SessionDeps,
};
pub use state::{is_expected, next_state, Budget, EventKind, FsmEvent, FsmState};
pub use transcript::{
    generation_requests_outside_generate, log_path, read_log, replay_transitions, sanitize_component, ReplayError,
    Transcript, TranscriptRecord,
};

#[cfg(test)]
mod tests;
