//! Chat-completion client over HTTP+JSON.

use std::time::Duration;

use serde_json::{json, Value};

use super::backend::{ChatBackend, ChatReply, ChatRequest};
use super::BackendError;
use crate::prompt::Role;

pub const ENV_LLM_URL: &str = "OPFORGE_LLM_URL";
pub const ENV_LLM_API_KEY: &str = "OPFORGE_LLM_API_KEY";
pub const ENV_SUMMARIZER_URL: &str = "OPFORGE_SUMMARIZER_URL";
pub const ENV_SUMMARIZER_API_KEY: &str = "OPFORGE_SUMMARIZER_API_KEY";

const REDACTED: &str = "<redacted>";

#[derive(Clone)]
pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| REDACTED))
            .finish()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpConfigError {
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("building http client: {0}")]
    Build(#[from] reqwest::Error),
}

impl HttpChatClient {
    /// `base_url` may be the full `/chat/completions` URL or its parent.
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, HttpConfigError> {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder().timeout(timeout).build()?;
        Ok(Self {
            endpoint,
            api_key: api_key.filter(|k| !k.is_empty()),
            client,
        })
    }

    pub fn generator_from_env(timeout: Duration) -> Result<Self, HttpConfigError> {
        Self::from_env(ENV_LLM_URL, ENV_LLM_API_KEY, timeout)
    }

    /// Summarizer settings, defaulting to the generator's when unset.
    pub fn summarizer_from_env(timeout: Duration) -> Result<Self, HttpConfigError> {
        if std::env::var_os(ENV_SUMMARIZER_URL).is_some() {
            Self::from_env(ENV_SUMMARIZER_URL, ENV_SUMMARIZER_API_KEY, timeout)
        } else {
            Self::generator_from_env(timeout)
        }
    }

    fn from_env(url_var: &'static str, key_var: &'static str, timeout: Duration) -> Result<Self, HttpConfigError> {
        let url = std::env::var(url_var).map_err(|_| HttpConfigError::MissingEnv(url_var))?;
        Self::new(&url, std::env::var(key_var).ok(), timeout)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        let p = &request.params;
        let mut body = json!({
            "model": p.model_id,
            "messages": messages,
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_tokens": p.max_output_tokens,
        });
        if let Some(level) = p.reasoning_level {
            body["reasoning_effort"] = json!(level.as_str());
        }
        body
    }
}

fn extract_text(body: &Value) -> Option<String> {
    let message = body.get("choices")?.get(0)?.get("message")?;
    message.get("content")?.as_str().map(str::to_string)
}

impl ChatBackend for HttpChatClient {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, BackendError> {
        let body = Self::request_body(request);
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let retry_after_ms = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(|secs| secs * 1000);
        let text = response.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited { retry_after_ms });
        }
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("HTTP {status}: {}", crate::protocol::tail_chars(&text, 500))));
        }
        if !status.is_success() {
            return Err(BackendError::BadResponse(format!("HTTP {status}: {}", crate::protocol::tail_chars(&text, 500))));
        }
        let parsed: Value = serde_json::from_str(&text).map_err(|e| BackendError::BadResponse(format!("invalid JSON: {e}")))?;
        let content = extract_text(&parsed).ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))?;
        let wire = json!({
            "endpoint": self.endpoint,
            "authorization": self.api_key.as_ref().map(|_| REDACTED),
            "request": body,
            "response": parsed,
        });
        Ok(ChatReply {
            text: content,
            wire: Some(wire),
        })
    }
}
