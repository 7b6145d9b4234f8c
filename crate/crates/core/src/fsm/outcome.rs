//! Results of sessions and of whole operators.

use serde::{Deserialize, Serialize};

use super::transcript::TranscriptRecord;
use crate::prompt::{CandidateArtifact, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Prompt,
    Parse,
    Lint,
    Compile,
    Accuracy,
    Crash,
    Saturation,
    LlmUnavailable,
    WorkerLost,
    Deadline,
    NoTests,
    Panic,
}

impl FailureStage {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureStage::Prompt => "prompt",
            FailureStage::Parse => "parse",
            FailureStage::Lint => "lint",
            FailureStage::Compile => "compile",
            FailureStage::Accuracy => "accuracy",
            FailureStage::Crash => "crash",
            FailureStage::Saturation => "saturation",
            FailureStage::LlmUnavailable => "llm_unavailable",
            FailureStage::WorkerLost => "worker_lost",
            FailureStage::Deadline => "deadline",
            FailureStage::NoTests => "no_tests",
            FailureStage::Panic => "panic",
        }
    }

    /// Failures caused by the harness rather than by the generated code.
    pub fn is_infrastructure(self) -> bool {
        matches!(self, FailureStage::LlmUnavailable | FailureStage::WorkerLost | FailureStage::Panic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Success,
    Failure,
    /// The context filled up; the caller starts a fresh session.
    Saturated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub status: SessionStatus,
    pub attempt_index: u32,
    pub llm_calls_used: u32,
    /// Present exactly when `status` is `Success`.
    pub final_artifact: Option<CandidateArtifact>,
    /// Most recent parsed candidate (or the prior one if none was parsed).
    pub latest_artifact: Option<CandidateArtifact>,
    pub failure_stage: Option<FailureStage>,
    pub diagnostic: Option<String>,
    pub initial_prompt: PromptKind,
    /// Kinds of the feedback prompts sent, in order.
    pub feedback_kinds: Vec<PromptKind>,
    pub summarizer_calls: u32,
    pub transcript: Vec<TranscriptRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub attempt_index: u32,
    pub status: SessionStatus,
    pub llm_calls_used: u32,
    pub initial_prompt: PromptKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_stage: Option<FailureStage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorResult {
    pub operator: String,
    pub status: OperatorStatus,
    pub attempts: Vec<AttemptSummary>,
    pub llm_calls_total: u32,
    /// Generation calls spent across attempts up to and including the
    /// successful one.
    pub calls_to_success: Option<u32>,
    pub failure_stage: Option<FailureStage>,
    pub infrastructure_failure: bool,
    pub diagnostic: Option<String>,
    pub final_artifact: Option<CandidateArtifact>,
    pub latest_artifact: Option<CandidateArtifact>,
}
