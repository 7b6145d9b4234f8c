//! Retrying, rate-limited front door to the generation and summarization
//! backends.

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::Serialize;

use super::backend::{ChatBackend, ChatMessage, ChatRequest, Purpose};
use super::{BackendError, DialogSession, ModelParams, SessionTag};
use crate::prompt::{template, truncate_log, Prompt, Role, SUMMARY_FALLBACK_CHARS};

pub const DEFAULT_CONCURRENCY_LIMIT: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub multiplier: u32,
    pub max_delay: Duration,
    /// Extra random delay, as a fraction of the nominal delay.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    /// 3 attempts; nominal waits of 1 s, 4 s, 16 s (capped) before retries.
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            multiplier: 4,
            max_delay: Duration::from_secs(16),
            jitter: 0.1,
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget, no waiting. Used with mocks.
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            jitter: 0.0,
            ..Self::default()
        }
    }

    /// Nominal wait before retry number `retry` (0-based), without jitter.
    pub fn nominal_delay(&self, retry: u32) -> Duration {
        let factor = self.multiplier.saturating_pow(retry);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    fn delay_for(&self, retry: u32, err: &BackendError) -> Duration {
        let nominal = err
            .retry_after()
            .map(|d| d.min(self.max_delay))
            .unwrap_or_else(|| self.nominal_delay(retry));
        if self.jitter > 0.0 && !nominal.is_zero() {
            let extra = rand::thread_rng().gen_range(0.0..=self.jitter);
            nominal.mul_f64(1.0 + extra)
        } else {
            nominal
        }
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// What happened on the way to a reply (or failure).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CallLog {
    pub attempts: u32,
    pub errors: Vec<BackendError>,
    #[serde(with = "millis")]
    pub delays: Vec<Duration>,
}

mod millis {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(v: &[Duration], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|d| d.as_millis() as u64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub log: CallLog,
    pub wire: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("context window saturated: {used} used + {next} next + {reserved} reserved > {context}")]
    Saturated {
        used: u64,
        next: u64,
        reserved: u64,
        context: u64,
    },
    #[error("{error} (after {} attempt(s))", .log.attempts)]
    Failed { error: BackendError, log: CallLog },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarySource {
    Summarizer,
    TruncatedFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOutcome {
    pub text: String,
    pub source: SummarySource,
    pub error: Option<BackendError>,
    pub log: CallLog,
}

#[derive(Clone)]
pub struct LlmGateway {
    generator: Arc<dyn ChatBackend>,
    summarizer: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Arc<crate::sync::Semaphore>,
    sleeper: Sleeper,
}

impl std::fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmGateway")
            .field("retry", &self.retry)
            .field("limit", &self.limiter.capacity())
            .finish_non_exhaustive()
    }
}

impl LlmGateway {
    /// One backend for both generation and summarization.
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            generator: backend.clone(),
            summarizer: backend,
            retry: RetryPolicy::default(),
            limiter: Arc::new(crate::sync::Semaphore::new(DEFAULT_CONCURRENCY_LIMIT)),
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_summarizer(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.summarizer = backend;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency_limit(mut self, limit: usize) -> Self {
        self.limiter = Arc::new(crate::sync::Semaphore::new(limit.max(1)));
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    /// Sends the session history plus `prompt` to the generation model. The
    /// session gains the user and assistant turns only when a reply arrives.
    pub fn complete(&self, session: &mut DialogSession, prompt: &Prompt) -> Result<Completion, GatewayError> {
        if session.is_saturated(prompt) {
            return Err(GatewayError::Saturated {
                used: session.used_tokens_estimate(),
                next: prompt.token_estimate,
                reserved: session.reserved_output_budget,
                context: session.params.context_length,
            });
        }
        let mut messages: Vec<ChatMessage> = session
            .turns()
            .iter()
            .map(|t| ChatMessage {
                role: t.role,
                content: t.text.clone(),
            })
            .collect();
        messages.push(ChatMessage {
            role: Role::User,
            content: prompt.text.clone(),
        });
        let request = ChatRequest {
            tag: session.tag.clone(),
            purpose: Purpose::Generate,
            kind: Some(prompt.kind),
            messages,
            params: session.params.clone(),
        };
        let completion = self.send(self.generator.as_ref(), &request)?;
        session.append_exchange(prompt, completion.text.clone());
        Ok(completion)
    }

    /// One-shot request to the summarization model.
    pub fn summarize(&self, log: &str, params: &ModelParams, tag: &SessionTag) -> Result<Completion, GatewayError> {
        let text = template::SUMMARIZATION
            .render(&[("log", log)])
            .expect("summarization template has only the log placeholder");
        let request = ChatRequest {
            tag: tag.clone(),
            purpose: Purpose::Summarize,
            kind: None,
            messages: vec![ChatMessage {
                role: Role::User,
                content: text,
            }],
            params: params.clone(),
        };
        self.send(self.summarizer.as_ref(), &request)
    }

    /// [`Self::summarize`], falling back to the tail of the raw log.
    pub fn summarize_or_truncate(&self, log: &str, params: &ModelParams, tag: &SessionTag) -> SummaryOutcome {
        match self.summarize(log, params, tag) {
            Ok(c) => SummaryOutcome {
                text: c.text,
                source: SummarySource::Summarizer,
                error: None,
                log: c.log,
            },
            Err(GatewayError::Failed { error, log: call_log }) => {
                tracing::warn!(operator = %tag.operator, %error, "summarizer failed; using truncated log");
                SummaryOutcome {
                    text: truncate_log(log, SUMMARY_FALLBACK_CHARS),
                    source: SummarySource::TruncatedFallback,
                    error: Some(error),
                    log: call_log,
                }
            }
            Err(GatewayError::Saturated { .. }) => unreachable!("summarize has no saturation check"),
        }
    }

    fn send(&self, backend: &dyn ChatBackend, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let mut log = CallLog::default();
        loop {
            log.attempts += 1;
            let result = {
                let _permit = self.limiter.acquire();
                backend.chat(request)
            };
            match result {
                Ok(reply) => {
                    return Ok(Completion {
                        text: reply.text,
                        log,
                        wire: reply.wire,
                    })
                }
                Err(error) => {
                    let retry = log.attempts - 1;
                    let give_up = !error.is_retryable() || log.attempts >= self.retry.max_attempts;
                    tracing::debug!(operator = %request.tag.operator, attempt = log.attempts, %error, give_up, "llm call failed");
                    if give_up {
                        log.errors.push(error.clone());
                        return Err(GatewayError::Failed { error, log });
                    }
                    let delay = self.retry.delay_for(retry, &error);
                    log.errors.push(error);
                    log.delays.push(delay);
                    (self.sleeper)(delay);
                }
            }
        }
    }
}
