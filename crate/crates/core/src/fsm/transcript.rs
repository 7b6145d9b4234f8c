//! Append-only event log of one session.
//!
//! Records carry no timestamps or worker identities, so identical inputs
//! produce byte-identical logs. On disk each record is one JSON line under
//! `<dir>/<operator>/attempt<N>.log`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::state::{next_state, Budget, EventKind, FsmState};
use crate::prompt::PromptKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TranscriptRecord {
    SessionStart {
        operator: String,
        attempt: u32,
        max_llm_calls: u32,
        linter_enabled: bool,
        summarization_enabled: bool,
        resumed: bool,
        test_cases: usize,
    },
    Transition {
        from: FsmState,
        event: EventKind,
        to: FsmState,
        budget: Budget,
        calls_used: u32,
    },
    LlmRequest {
        call: u32,
        kind: PromptKind,
        token_estimate: u64,
        text: String,
    },
    LlmResponse {
        call: u32,
        attempts: u32,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wire: Option<serde_json::Value>,
    },
    LlmError {
        call: u32,
        attempts: u32,
        error: String,
    },
    Lint {
        pass: bool,
        rules: Vec<String>,
        report: String,
    },
    Worker {
        request: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        case_id: Option<String>,
        outcome: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Summarize {
        source: String,
        input_chars: usize,
        output_chars: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Note {
        message: String,
    },
    SessionEnd {
        status: String,
        calls_used: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure_stage: Option<String>,
    },
}

/// In-memory record list with an optional file mirror.
#[derive(Debug, Default)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl Transcript {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Mirrors every record to `<dir>/<operator>/attempt<attempt>.log`,
    /// truncating an existing file.
    pub fn to_dir(dir: &Path, operator: &str, attempt: u32) -> std::io::Result<Self> {
        let path = log_path(dir, operator, attempt);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(&path)?;
        Ok(Self {
            records: Vec::new(),
            sink: Some((path, BufWriter::new(file))),
        })
    }

    pub fn push(&mut self, record: TranscriptRecord) {
        if let Some((path, w)) = &mut self.sink {
            let line = serde_json::to_string(&record).expect("transcript records serialize");
            let res = writeln!(w, "{line}").and_then(|_| w.flush());
            if let Err(e) = res {
                tracing::warn!(path = %path.display(), error = %e, "transcript write failed; keeping in memory only");
                self.sink = None;
            }
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn into_records(self) -> Vec<TranscriptRecord> {
        self.records
    }
}

/// File-system safe form of an operator name.
pub fn sanitize_component(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

pub fn log_path(dir: &Path, operator: &str, attempt: u32) -> PathBuf {
    dir.join(sanitize_component(operator)).join(format!("attempt{attempt}.log"))
}

pub fn read_log(path: &Path) -> anyhow::Result<Vec<TranscriptRecord>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("transition {index} starts at {found:?} but the previous one ended at {expected:?}")]
    Discontinuous { index: usize, expected: FsmState, found: FsmState },
    #[error("transition {index} recorded {recorded:?} but next_state gives {computed:?}")]
    Diverged { index: usize, recorded: FsmState, computed: FsmState },
}

/// Re-runs every recorded transition through [`next_state`] and returns the
/// state sequence, starting with `InitialPrompt`.
pub fn replay_transitions(records: &[TranscriptRecord]) -> Result<Vec<FsmState>, ReplayError> {
    let mut states = vec![FsmState::InitialPrompt];
    let mut index = 0;
    for r in records {
        if let TranscriptRecord::Transition { from, event, to, budget, .. } = r {
            let cur = *states.last().expect("non-empty");
            if *from != cur {
                return Err(ReplayError::Discontinuous { index, expected: cur, found: *from });
            }
            let computed = next_state(*from, *event, *budget);
            if computed != *to {
                return Err(ReplayError::Diverged { index, recorded: *to, computed });
            }
            states.push(computed);
            index += 1;
        }
    }
    Ok(states)
}

/// Generation requests that occur outside a `GenerateKernel` stay, as call
/// indices. Empty for a well-formed transcript.
pub fn generation_requests_outside_generate(records: &[TranscriptRecord]) -> Vec<u32> {
    let mut state = FsmState::InitialPrompt;
    let mut bad = vec![];
    for r in records {
        match r {
            TranscriptRecord::Transition { to, .. } => state = *to,
            TranscriptRecord::LlmRequest { call, .. } if state != FsmState::GenerateKernel => bad.push(*call),
            _ => {}
        }
    }
    bad
}
