//! States, events and the pure transition function of a generation session.

use serde::{Deserialize, Serialize};

use crate::lint::LintReport;
use crate::prompt::{AccuracyPayload, CandidateArtifact, ResponseError};
use crate::protocol::CrashReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    InitialPrompt,
    GenerateKernel,
    Lint,
    CompileAndTest,
    Feedback,
    NewSessionRestart,
    Success,
    Failure,
}

impl FsmState {
    pub const ALL: [FsmState; 8] = [
        FsmState::InitialPrompt,
        FsmState::GenerateKernel,
        FsmState::Lint,
        FsmState::CompileAndTest,
        FsmState::Feedback,
        FsmState::NewSessionRestart,
        FsmState::Success,
        FsmState::Failure,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, FsmState::Success | FsmState::Failure)
    }

    /// The session loop stops here. A restart is handed to the caller.
    pub fn ends_session(self) -> bool {
        self.is_terminal() || self == FsmState::NewSessionRestart
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FsmEvent {
    /// A prompt (initial or feedback) has been built and fits the context.
    PromptReady,
    ResponseParsed(CandidateArtifact),
    ParseFailed(ResponseError),
    /// The generation call failed in a way worth retrying within budget.
    LlmFailed(String),
    /// The generation service is unreachable after retries.
    LlmUnavailable(String),
    LintPassed,
    LintFailed(LintReport),
    CompileFailed(String),
    RuntimeCrashed(CrashReport),
    TestFailed(AccuracyPayload),
    AllTestsPassed,
    Saturated,
    BudgetExhausted,
    WorkerLost(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PromptReady,
    ResponseParsed,
    ParseFailed,
    LlmFailed,
    LlmUnavailable,
    LintPassed,
    LintFailed,
    CompileFailed,
    RuntimeCrashed,
    TestFailed,
    AllTestsPassed,
    Saturated,
    BudgetExhausted,
    WorkerLost,
}

impl EventKind {
    pub const ALL: [EventKind; 14] = [
        EventKind::PromptReady,
        EventKind::ResponseParsed,
        EventKind::ParseFailed,
        EventKind::LlmFailed,
        EventKind::LlmUnavailable,
        EventKind::LintPassed,
        EventKind::LintFailed,
        EventKind::CompileFailed,
        EventKind::RuntimeCrashed,
        EventKind::TestFailed,
        EventKind::AllTestsPassed,
        EventKind::Saturated,
        EventKind::BudgetExhausted,
        EventKind::WorkerLost,
    ];

    /// Events answered with a feedback prompt and another generation call.
    pub fn wants_feedback(self) -> bool {
        matches!(
            self,
            EventKind::ParseFailed
                | EventKind::LintFailed
                | EventKind::CompileFailed
                | EventKind::RuntimeCrashed
                | EventKind::TestFailed
        )
    }
}

impl FsmEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            FsmEvent::PromptReady => EventKind::PromptReady,
            FsmEvent::ResponseParsed(_) => EventKind::ResponseParsed,
            FsmEvent::ParseFailed(_) => EventKind::ParseFailed,
            FsmEvent::LlmFailed(_) => EventKind::LlmFailed,
            FsmEvent::LlmUnavailable(_) => EventKind::LlmUnavailable,
            FsmEvent::LintPassed => EventKind::LintPassed,
            FsmEvent::LintFailed(_) => EventKind::LintFailed,
            FsmEvent::CompileFailed(_) => EventKind::CompileFailed,
            FsmEvent::RuntimeCrashed(_) => EventKind::RuntimeCrashed,
            FsmEvent::TestFailed(_) => EventKind::TestFailed,
            FsmEvent::AllTestsPassed => EventKind::AllTestsPassed,
            FsmEvent::Saturated => EventKind::Saturated,
            FsmEvent::BudgetExhausted => EventKind::BudgetExhausted,
            FsmEvent::WorkerLost(_) => EventKind::WorkerLost,
        }
    }
}

/// What the transition function needs to know besides state and event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Generation calls still allowed in this session.
    pub calls_remaining: u32,
    /// Sessions still allowed after this one.
    pub attempts_remaining: u32,
    pub linter_enabled: bool,
}

/// Total transition function. Pairs that cannot occur in a well-behaved
/// session map to `Failure`; see [`is_expected`].
pub fn next_state(state: FsmState, event: EventKind, budget: Budget) -> FsmState {
    use EventKind as E;
    use FsmState as S;

    if state.ends_session() {
        return state;
    }
    match event {
        E::BudgetExhausted | E::WorkerLost | E::LlmUnavailable => return S::Failure,
        E::Saturated => {
            return if budget.attempts_remaining > 0 {
                S::NewSessionRestart
            } else {
                S::Failure
            }
        }
        _ => {}
    }
    let retry = || {
        if budget.calls_remaining > 0 {
            S::Feedback
        } else {
            S::Failure
        }
    };
    match (state, event) {
        (S::InitialPrompt | S::Feedback, E::PromptReady) => S::GenerateKernel,
        (S::GenerateKernel, E::ResponseParsed) if budget.linter_enabled => S::Lint,
        (S::GenerateKernel, E::ResponseParsed) => S::CompileAndTest,
        (S::GenerateKernel, E::ParseFailed) => retry(),
        (S::GenerateKernel, E::LlmFailed) if budget.calls_remaining > 0 => S::GenerateKernel,
        (S::GenerateKernel, E::LlmFailed) => S::Failure,
        (S::Lint, E::LintPassed) => S::CompileAndTest,
        (S::Lint, E::LintFailed) => retry(),
        (S::CompileAndTest, E::CompileFailed | E::RuntimeCrashed | E::TestFailed) => retry(),
        (S::CompileAndTest, E::AllTestsPassed) => S::Success,
        _ => S::Failure,
    }
}

/// Whether `(state, event)` can arise from the session driver.
pub fn is_expected(state: FsmState, event: EventKind) -> bool {
    use EventKind as E;
    use FsmState as S;
    if state.ends_session() {
        return false;
    }
    if matches!(event, E::BudgetExhausted | E::Saturated) {
        return true;
    }
    matches!(
        (state, event),
        (S::InitialPrompt | S::Feedback, E::PromptReady)
            | (S::GenerateKernel, E::ResponseParsed | E::ParseFailed | E::LlmFailed | E::LlmUnavailable)
            | (S::Lint, E::LintPassed | E::LintFailed)
            | (
                S::CompileAndTest,
                E::CompileFailed | E::RuntimeCrashed | E::TestFailed | E::AllTestsPassed | E::WorkerLost
            )
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(calls: u32, attempts: u32, linter: bool) -> Budget {
        Budget {
            calls_remaining: calls,
            attempts_remaining: attempts,
            linter_enabled: linter,
        }
    }

    #[test]
    fn documented_examples() {
        for b in [budget(0, 0, true), budget(5, 2, false)] {
            assert_eq!(next_state(FsmState::CompileAndTest, EventKind::AllTestsPassed, b), FsmState::Success);
        }
        assert_eq!(next_state(FsmState::Lint, EventKind::LintFailed, budget(0, 2, true)), FsmState::Failure);
        assert_eq!(next_state(FsmState::Lint, EventKind::LintFailed, budget(1, 0, true)), FsmState::Feedback);
        assert_eq!(
            next_state(FsmState::Feedback, EventKind::Saturated, budget(3, 1, true)),
            FsmState::NewSessionRestart
        );
        assert_eq!(next_state(FsmState::Feedback, EventKind::Saturated, budget(3, 0, true)), FsmState::Failure);
        assert_eq!(
            next_state(FsmState::GenerateKernel, EventKind::ResponseParsed, budget(3, 0, false)),
            FsmState::CompileAndTest
        );
        assert_eq!(next_state(FsmState::GenerateKernel, EventKind::ResponseParsed, budget(3, 0, true)), FsmState::Lint);
    }

    /// Exhaustive over state x event x budget. Checks totality and the laws
    /// the session driver relies on.
    #[test]
    fn exhaustive_enumeration() {
        let mut checked = 0;
        for state in FsmState::ALL {
            for event in EventKind::ALL {
                for calls in 0..=2 {
                    for attempts in 0..=2 {
                        for linter in [false, true] {
                            let b = budget(calls, attempts, linter);
                            let to = next_state(state, event, b);
                            checked += 1;
                            if state.ends_session() {
                                assert_eq!(to, state, "{state:?} must absorb");
                                continue;
                            }
                            if event == EventKind::BudgetExhausted {
                                assert_eq!(to, FsmState::Failure);
                            }
                            if event == EventKind::Saturated {
                                let want = if attempts > 0 { FsmState::NewSessionRestart } else { FsmState::Failure };
                                assert_eq!(to, want);
                            }
                            // GenerateKernel is reachable only with calls to spend.
                            if to == FsmState::GenerateKernel && state != FsmState::InitialPrompt && state != FsmState::Feedback {
                                assert!(calls > 0, "{state:?} --{event:?}--> GenerateKernel with no calls");
                            }
                            if to == FsmState::Feedback {
                                assert!(calls > 0);
                                assert!(event.wants_feedback());
                            }
                            if to == FsmState::Success {
                                assert_eq!((state, event), (FsmState::CompileAndTest, EventKind::AllTestsPassed));
                            }
                            if to == FsmState::Lint {
                                assert!(linter);
                            }
                            if !is_expected(state, event) {
                                assert_eq!(to, FsmState::Failure, "unexpected pair {state:?}/{event:?}");
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(checked, 8 * 14 * 3 * 3 * 2);
    }
}
