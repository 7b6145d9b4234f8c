//! Structured crash data returned by workers when a candidate faults at run time.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Upper bound on [`CrashReport::raw_excerpt`], in characters.
pub const MAX_CRASH_EXCERPT: usize = 8_192;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktraceFrame {
    pub function: String,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashReport {
    pub crash_kind: String,
    #[serde(default)]
    pub backtrace_frames: Vec<BacktraceFrame>,
    #[serde(default)]
    pub register_summary: Option<String>,
    #[serde(default)]
    pub raw_excerpt: String,
}

impl CrashReport {
    /// Builds a report, keeping only the last [`MAX_CRASH_EXCERPT`] characters
    /// of `raw` (the end of a trace carries the fault).
    pub fn new(
        crash_kind: impl Into<String>,
        backtrace_frames: Vec<BacktraceFrame>,
        register_summary: Option<String>,
        raw: &str,
    ) -> Self {
        Self {
            crash_kind: crash_kind.into(),
            backtrace_frames,
            register_summary,
            raw_excerpt: tail_chars(raw, MAX_CRASH_EXCERPT).to_string(),
        }
    }

    /// Re-applies the excerpt bound; used on reports received from workers.
    pub fn bounded(mut self) -> Self {
        if self.raw_excerpt.chars().count() > MAX_CRASH_EXCERPT {
            self.raw_excerpt = tail_chars(&self.raw_excerpt, MAX_CRASH_EXCERPT).to_string();
        }
        self
    }
}

impl fmt::Display for CrashReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Crash kind: {}", self.crash_kind)?;
        if self.backtrace_frames.is_empty() {
            writeln!(f, "Backtrace: <unavailable>")?;
        } else {
            writeln!(f, "Backtrace (most recent call last):")?;
            for (i, fr) in self.backtrace_frames.iter().enumerate() {
                writeln!(f, "  #{i} {} at {}", fr.function, fr.location)?;
            }
        }
        if let Some(r) = &self.register_summary {
            writeln!(f, "Registers:\n{r}")?;
        }
        if self.raw_excerpt.is_empty() {
            Ok(())
        } else {
            write!(f, "Raw output:\n{}", self.raw_excerpt)
        }
    }
}

/// The last `n` characters of `s`.
pub fn tail_chars(s: &str, n: usize) -> &str {
    let count = s.chars().count();
    if count <= n {
        return s;
    }
    let skip = count - n;
    let idx = s.char_indices().nth(skip).map(|(i, _)| i).unwrap_or(s.len());
    &s[idx..]
}
