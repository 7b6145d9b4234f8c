//! Scripted chat backend for tests and offline campaigns.
//!
//! A script is keyed by operator. Within one operator the backend keeps a
//! single call counter across all attempts and retries, so the same script
//! always produces the same conversation regardless of how sessions are
//! scheduled. Lookup order for a generation call with index `i` and prompt
//! kind `k`: `at[i]`, then `by_kind[k]`, then the next unused entry of
//! `responses`, then `fallback`, else a deterministic `Unavailable` error.
//!
//! ```json
//! {"operators": {"exp": {"responses": [{"module": "..."}], "fallback": "no code"}},
//!  "default": {"responses": ["..."]}}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::backend::{ChatBackend, ChatReply, ChatRequest, Purpose};
use super::BackendError;
use crate::prompt::PromptKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockErrorKind {
    Transport,
    RateLimited,
    BadResponse,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockEntry {
    /// Returned verbatim.
    Text(String),
    /// Returned wrapped in a python code fence.
    Module { module: String },
    /// Resolved into `Module` by [`MockScript::load`], relative to the script.
    ModuleFile { module_file: PathBuf },
    Error {
        error: MockErrorKind,
        #[serde(default)]
        message: String,
    },
    /// Panics inside the backend call, simulating a crashing session task.
    Panic { panic: String },
}

impl MockEntry {
    pub fn module(source: impl Into<String>) -> Self {
        MockEntry::Module { module: source.into() }
    }

    fn play(&self) -> Result<ChatReply, BackendError> {
        match self {
            MockEntry::Text(t) => Ok(ChatReply::text(t.clone())),
            MockEntry::Module { module } => {
                let body = module.strip_suffix('\n').unwrap_or(module);
                Ok(ChatReply::text(format!("```python\n{body}\n```")))
            }
            MockEntry::ModuleFile { module_file } => Err(BackendError::BadResponse(format!(
                "unresolved module_file {}",
                module_file.display()
            ))),
            MockEntry::Error { error, message } => Err(match error {
                MockErrorKind::Transport => BackendError::Transport(message.clone()),
                MockErrorKind::RateLimited => BackendError::RateLimited { retry_after_ms: None },
                MockErrorKind::BadResponse => BackendError::BadResponse(message.clone()),
                MockErrorKind::Unavailable => BackendError::Unavailable(message.clone()),
            }),
            MockEntry::Panic { panic } => panic!("{panic}"),
        }
    }

    fn resolve_files(&mut self, base: &Path) -> std::io::Result<()> {
        if let MockEntry::ModuleFile { module_file } = self {
            let module = std::fs::read_to_string(base.join(&*module_file))?;
            *self = MockEntry::Module { module };
        }
        Ok(())
    }
}

impl From<&str> for MockEntry {
    fn from(s: &str) -> Self {
        MockEntry::Text(s.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorScript {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<MockEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub at: BTreeMap<u32, MockEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_kind: BTreeMap<PromptKind, MockEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<MockEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub summaries: Vec<MockEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_fallback: Option<MockEntry>,
}

impl OperatorScript {
    pub fn sequence<E: Into<MockEntry>>(entries: impl IntoIterator<Item = E>) -> Self {
        Self {
            responses: entries.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    /// Every generation call gets `entry`.
    pub fn always(entry: impl Into<MockEntry>) -> Self {
        Self {
            fallback: Some(entry.into()),
            ..Self::default()
        }
    }

    pub fn with_summary(mut self, entry: impl Into<MockEntry>) -> Self {
        self.summary_fallback = Some(entry.into());
        self
    }

    fn entries_mut(&mut self) -> impl Iterator<Item = &mut MockEntry> {
        self.responses
            .iter_mut()
            .chain(self.at.values_mut())
            .chain(self.by_kind.values_mut())
            .chain(self.fallback.iter_mut())
            .chain(self.summaries.iter_mut())
            .chain(self.summary_fallback.iter_mut())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub operators: BTreeMap<String, OperatorScript>,
    /// Used for operators without their own entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<OperatorScript>,
}

#[derive(Debug, thiserror::Error)]
pub enum MockScriptError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing mock script {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl MockScript {
    pub fn for_operator(op: impl Into<String>, script: OperatorScript) -> Self {
        let mut s = Self::default();
        s.operators.insert(op.into(), script);
        s
    }

    pub fn with_default(mut self, script: OperatorScript) -> Self {
        self.default = Some(script);
        self
    }

    pub fn with_operator(mut self, op: impl Into<String>, script: OperatorScript) -> Self {
        self.operators.insert(op.into(), script);
        self
    }

    /// Reads a JSON (or YAML, by extension) script and inlines `module_file`
    /// entries.
    pub fn load(path: &Path) -> Result<Self, MockScriptError> {
        let io = |source| MockScriptError::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = std::fs::read_to_string(path).map_err(io)?;
        let yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
        let mut script: MockScript = if yaml {
            serde_yaml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        }
        .map_err(|message| MockScriptError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for op in script.operators.values_mut().chain(script.default.iter_mut()) {
            for entry in op.entries_mut() {
                entry.resolve_files(base).map_err(io)?;
            }
        }
        Ok(script)
    }

    fn script(&self, op: &str) -> Option<&OperatorScript> {
        self.operators.get(op).or(self.default.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordedCall {
    pub operator: String,
    pub attempt: u32,
    pub purpose: Purpose,
    pub kind: Option<PromptKind>,
    /// Per-operator, per-purpose index of this backend invocation.
    pub index: u32,
}

#[derive(Debug, Default, Clone, Copy)]
struct Cursor {
    calls: u32,
    next_response: usize,
    summaries: u32,
}

#[derive(Debug, Default)]
pub struct MockLlm {
    script: MockScript,
    cursors: Mutex<BTreeMap<String, Cursor>>,
    calls: Mutex<Vec<RecordedCall>>,
}

impl MockLlm {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            ..Self::default()
        }
    }

    /// The same responses for every operator, in order.
    pub fn sequence<E: Into<MockEntry>>(entries: impl IntoIterator<Item = E>) -> Self {
        Self::new(MockScript::default().with_default(OperatorScript::sequence(entries)))
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().clone()
    }

    pub fn call_count(&self, op: &str, purpose: Purpose) -> usize {
        self.calls
            .lock()
            .iter()
            .filter(|c| c.operator == op && c.purpose == purpose)
            .count()
    }

    fn pick(&self, req: &ChatRequest) -> (u32, Option<MockEntry>) {
        let op = req.tag.operator.as_str();
        let script = self.script.script(op);
        let mut cursors = self.cursors.lock();
        let cur = cursors.entry(op.to_string()).or_default();
        match req.purpose {
            Purpose::Generate => {
                let index = cur.calls;
                cur.calls += 1;
                let Some(s) = script else { return (index, None) };
                if let Some(e) = s.at.get(&index) {
                    return (index, Some(e.clone()));
                }
                if let Some(e) = req.kind.and_then(|k| s.by_kind.get(&k)) {
                    return (index, Some(e.clone()));
                }
                if let Some(e) = s.responses.get(cur.next_response) {
                    cur.next_response += 1;
                    return (index, Some(e.clone()));
                }
                (index, s.fallback.clone())
            }
            Purpose::Summarize => {
                let index = cur.summaries;
                cur.summaries += 1;
                let entry = script.and_then(|s| {
                    s.summaries
                        .get(index as usize)
                        .or(s.summary_fallback.as_ref())
                        .cloned()
                });
                (index, entry)
            }
        }
    }
}

impl ChatBackend for MockLlm {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, BackendError> {
        let (index, entry) = self.pick(request);
        self.calls.lock().push(RecordedCall {
            operator: request.tag.operator.clone(),
            attempt: request.tag.attempt,
            purpose: request.purpose,
            kind: request.kind,
            index,
        });
        match entry {
            Some(e) => e.play(),
            None => Err(BackendError::Unavailable(format!(
                "mock script exhausted for operator {} at {:?} call {index}",
                request.tag.operator, request.purpose
            ))),
        }
    }
}
