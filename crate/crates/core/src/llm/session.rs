//! One LLM conversation and its context accounting.

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::prompt::{token_estimate, Prompt, PromptKind, Role};

/// Tokens kept free for the model's reply when checking saturation.
pub const RESERVED_OUTPUT_BUDGET: u64 = 8_192;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
}

/// Identifies the conversation a request belongs to (used by the mock and
/// in logs).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionTag {
    pub operator: String,
    /// 1-based attempt index.
    pub attempt: u32,
}

#[derive(Debug, Clone)]
pub struct DialogSession {
    pub tag: SessionTag,
    pub params: ModelParams,
    pub reserved_output_budget: u64,
    turns: Vec<Turn>,
    used_tokens_estimate: u64,
    call_count: u32,
}

impl DialogSession {
    pub fn new(tag: SessionTag, params: ModelParams, system: Option<String>) -> Self {
        let mut s = Self {
            tag,
            params,
            reserved_output_budget: RESERVED_OUTPUT_BUDGET,
            turns: Vec::new(),
            used_tokens_estimate: 0,
            call_count: 0,
        };
        if let Some(text) = system {
            s.push(Turn {
                role: Role::System,
                text,
                kind: None,
            });
        }
        s
    }

    fn push(&mut self, turn: Turn) {
        self.used_tokens_estimate += token_estimate(&turn.text);
        if turn.role == Role::Assistant {
            self.call_count += 1;
        }
        self.turns.push(turn);
    }

    /// Appends one completed exchange. Both turns land together or not at all.
    pub(crate) fn append_exchange(&mut self, prompt: &Prompt, response: String) {
        self.push(Turn {
            role: Role::User,
            text: prompt.text.clone(),
            kind: Some(prompt.kind),
        });
        self.push(Turn {
            role: Role::Assistant,
            text: response,
            kind: None,
        });
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn used_tokens_estimate(&self) -> u64 {
        self.used_tokens_estimate
    }

    pub fn call_count(&self) -> u32 {
        self.call_count
    }

    /// True when the next prompt plus the reserved reply would overflow the context.
    pub fn is_saturated(&self, next_prompt: &Prompt) -> bool {
        is_saturated(self, next_prompt)
    }
}

pub fn is_saturated(session: &DialogSession, next_prompt: &Prompt) -> bool {
    session.used_tokens_estimate + next_prompt.token_estimate + session.reserved_output_budget
        > session.params.context_length
}
