//! Access to the generation and summarization models.
//!
//! [`LlmGateway`] owns retries, the global in-flight limit and the
//! saturation check. Transports implement [`ChatBackend`]: [`HttpChatClient`]
//! for a real chat-completion service and [`MockLlm`] for scripted runs.

mod backend;
mod gateway;
mod http;
mod mock;
mod params;
mod session;

pub use backend::{BackendError, ChatBackend, ChatMessage, ChatReply, ChatRequest, Purpose};
pub use gateway::{
    CallLog, Completion, GatewayError, LlmGateway, RetryPolicy, Sleeper, SummaryOutcome, SummarySource,
    DEFAULT_CONCURRENCY_LIMIT,
};
pub use http::{
    HttpChatClient, HttpConfigError, ENV_LLM_API_KEY, ENV_LLM_URL, ENV_SUMMARIZER_API_KEY, ENV_SUMMARIZER_URL,
};
pub use mock::{MockEntry, MockErrorKind, MockLlm, MockScript, MockScriptError, OperatorScript, RecordedCall};
pub use params::{InvalidParams, ModelParams, ReasoningLevel};
pub use session::{is_saturated, DialogSession, SessionTag, Turn, RESERVED_OUTPUT_BUDGET};
