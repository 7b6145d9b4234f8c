//! Prompt construction and response parsing.
//!
//! Every prompt is rendered from a bundled template file under
//! `data/templates/`; rendering is byte-deterministic for identical inputs.

mod artifact;
mod examples;
mod summary;
pub mod template;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use artifact::{
    fenced_blocks, parse_response, parse_response_strict, CandidateArtifact, ResponseError,
    KERNEL_PREFIX, WRAPPER_NAME,
};
pub use examples::{bundled_examples, ReferenceExample};
pub use summary::{
    fmt_value, python_repr, render_shapes, AccuracyPayload, TensorStats, TensorSummary,
    EXCERPT_CAP,
};

use crate::catalog::{DocstringDag, OperatorSpec};
use crate::dtype::python_list;
use crate::lint::LintReport;
use crate::protocol::{tail_chars, CrashReport};
use crate::Dtype;
use template::TemplateError;

pub const DEFAULT_DEVICE: &str = "MTIA";

/// Compile logs longer than this go to the summarizer when it is enabled.
pub const SUMMARY_TRIGGER_CHARS: usize = 4_000;
/// Tail of the raw log kept when the summarizer fails.
pub const SUMMARY_FALLBACK_CHARS: usize = 4_000;
/// Tail of the raw log kept when summarization is switched off.
pub const RAW_LOG_LIMIT_CHARS: usize = 32_768;

/// `ceil(chars / 4)`.
pub fn token_estimate(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// The last `limit` characters of a log, marked when something was cut.
pub fn truncate_log(log: &str, limit: usize) -> String {
    let tail = tail_chars(log, limit);
    if tail.len() == log.len() {
        log.to_string()
    } else {
        format!("[... log truncated to its last {limit} characters ...]\n{tail}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Init,
    InitResume,
    LintFeedback,
    CompileFeedback,
    AccuracyFeedback,
    CrashFeedback,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        PromptKind::Init,
        PromptKind::InitResume,
        PromptKind::LintFeedback,
        PromptKind::CompileFeedback,
        PromptKind::AccuracyFeedback,
        PromptKind::CrashFeedback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Init => "init",
            PromptKind::InitResume => "init_resume",
            PromptKind::LintFeedback => "lint_feedback",
            PromptKind::CompileFeedback => "compile_feedback",
            PromptKind::AccuracyFeedback => "accuracy_feedback",
            PromptKind::CrashFeedback => "crash_feedback",
        }
    }

    pub fn is_feedback(self) -> bool {
        !matches!(self, PromptKind::Init | PromptKind::InitResume)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub role: Role,
    pub kind: PromptKind,
    pub text: String,
    pub token_estimate: u64,
}

impl Prompt {
    fn user(kind: PromptKind, text: String) -> Self {
        Self {
            role: Role::User,
            kind,
            token_estimate: token_estimate(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackPayload {
    Lint(LintReport),
    CompileLog(String),
    Accuracy(AccuracyPayload),
    Crash(CrashReport),
}

impl FeedbackPayload {
    pub fn kind(&self) -> PromptKind {
        match self {
            FeedbackPayload::Lint(_) => PromptKind::LintFeedback,
            FeedbackPayload::CompileLog(_) => PromptKind::CompileFeedback,
            FeedbackPayload::Accuracy(_) => PromptKind::AccuracyFeedback,
            FeedbackPayload::Crash(_) => PromptKind::CrashFeedback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no docstring available for `{0}`")]
    MissingDocstring(String),
    #[error("at least one reference example is required")]
    NoExamples,
    #[error("payload for {found:?} cannot render a {expected:?} prompt")]
    PayloadKindMismatch {
        expected: PromptKind,
        found: PromptKind,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Renders prompts for one target device label.
#[derive(Debug, Clone)]
pub struct PromptFactory {
    device: String,
    examples: Vec<ReferenceExample>,
}

impl Default for PromptFactory {
    fn default() -> Self {
        Self::new(bundled_examples())
    }
}

impl PromptFactory {
    pub fn new(examples: Vec<ReferenceExample>) -> Self {
        Self {
            device: DEFAULT_DEVICE.to_string(),
            examples,
        }
    }

    pub fn with_device(mut self, device: impl Into<String>) -> Self {
        self.device = device.into();
        self
    }

    pub fn examples(&self) -> &[ReferenceExample] {
        &self.examples
    }

    pub fn system_preamble(&self) -> String {
        template::SYSTEM
            .render(&[("device", &self.device)])
            .expect("system template has only the device placeholder")
    }

    /// The initial prompt of a session; `prior` switches to the resume template.
    pub fn build_initial(
        &self,
        op: &OperatorSpec,
        dtypes: &BTreeSet<Dtype>,
        dag: &DocstringDag,
        prior: Option<&CandidateArtifact>,
    ) -> Result<Prompt, PromptError> {
        if self.examples.is_empty() {
            return Err(PromptError::NoExamples);
        }
        if op.docstring.trim().is_empty() {
            return Err(PromptError::MissingDocstring(op.name.clone()));
        }
        let chain = dag
            .resolve_chain(&op.name)
            .map_err(|_| PromptError::MissingDocstring(op.name.clone()))?;
        let supplemental = chain
            .iter()
            .skip(1)
            .map(|(_, d)| d.trim_end())
            .collect::<Vec<_>>()
            .join("\n\n");
        let references = self
            .examples
            .iter()
            .map(ReferenceExample::render)
            .collect::<Vec<_>>()
            .join("\n\n");
        let dtypes = python_list(dtypes.iter());
        let docstring = op.docstring.trim_end();
        let mut vars: Vec<(&str, &str)> = vec![
            ("op_name", &op.name),
            ("device", &self.device),
            ("dtypes", &dtypes),
            ("docstring", docstring),
            ("supplemental_docstrings", &supplemental),
            ("reference_kernels", &references),
        ];
        let (kind, tpl) = match prior {
            None => (PromptKind::Init, template::INIT),
            Some(p) => {
                vars.push(("current_implementation", p.module_source.trim_end()));
                (PromptKind::InitResume, template::INIT_RESUME)
            }
        };
        Ok(Prompt::user(kind, tpl.render(&vars)?))
    }

    pub fn build_feedback(
        &self,
        kind: PromptKind,
        payload: &FeedbackPayload,
    ) -> Result<Prompt, PromptError> {
        if payload.kind() != kind {
            return Err(PromptError::PayloadKindMismatch {
                expected: kind,
                found: payload.kind(),
            });
        }
        let device = self.device.as_str();
        let text = match payload {
            FeedbackPayload::Lint(report) => template::LINT_FEEDBACK
                .render(&[("device", device), ("lint_report", &report.render())])?,
            FeedbackPayload::CompileLog(log) => template::COMPILE_FEEDBACK
                .render(&[("device", device), ("compile_log", log.trim_end())])?,
            FeedbackPayload::Accuracy(p) => {
                let cpu = p.cpu_summary.to_string();
                let dev = p.device_summary.to_string();
                let shape = render_shapes(&p.input_shape);
                let args = p.rendered_args();
                let kwargs = p.rendered_kwargs();
                template::ACCURACY_FEEDBACK.render(&[
                    ("device", device),
                    ("cpu_summary", &cpu),
                    ("device_summary", &dev),
                    ("input_signature", &p.input_signature),
                    ("output_signature", &p.output_signature),
                    ("input_shape", &shape),
                    ("input_tensor", &p.input_tensor_excerpt),
                    ("input_args", &args),
                    ("input_kwargs", &kwargs),
                ])?
            }
            FeedbackPayload::Crash(report) => template::CRASH_FEEDBACK
                .render(&[("device", device), ("crash_report", report.to_string().trim_end())])?,
        };
        Ok(Prompt::user(kind, text))
    }

    /// Shorthand for [`Self::build_feedback`] with the payload's own kind.
    pub fn feedback(&self, payload: &FeedbackPayload) -> Prompt {
        self.build_feedback(payload.kind(), payload)
            .expect("payload kind always matches itself")
    }

    /// The request text sent to the summarization model.
    pub fn summarization_request(&self, log: &str) -> String {
        template::SUMMARIZATION
            .render(&[("log", log)])
            .expect("summarization template has only the log placeholder")
    }
}
