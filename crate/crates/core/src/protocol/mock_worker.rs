//! Protocol server that answers from a scripted outcome table instead of
//! executing anything. Rules are tried in order; the first whose `match`
//! substring occurs in the loaded module (and whose `operator`, if set,
//! equals the test's operator) decides the outcome. No match means the
//! module loads and every test passes.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::codec::{read_frame, write_frame, CodecError, Envelope};
use super::{BackendMode, BacktraceFrame, CrashReport, Message, TensorLiteral, TestCase};
use crate::prompt::{render_shapes, AccuracyPayload, TensorSummary};
use crate::{floats, Dtype};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadAction {
    #[default]
    Ok,
    CompileError { log: String },
    /// Terminates the worker without answering.
    Exit { code: i32 },
    Hang { ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TestAction {
    #[default]
    Pass,
    Fail {
        #[serde(with = "floats::vec")]
        cpu_values: Vec<f64>,
        #[serde(with = "floats::vec")]
        device_values: Vec<f64>,
    },
    Crash {
        crash_kind: String,
        #[serde(default)]
        frames: Vec<BacktraceFrame>,
        #[serde(default)]
        raw: String,
    },
    Exit { code: i32 },
    Hang { ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(rename = "match", default)]
    pub pattern: String,
    #[serde(default)]
    pub operator: Option<String>,
    #[serde(default)]
    pub load: LoadAction,
    #[serde(default)]
    pub test: TestAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MockWorkerScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Reported in CapabilitiesOk; all dtypes when absent.
    #[serde(default)]
    pub dtypes: Option<Vec<Dtype>>,
}

impl MockWorkerScript {
    pub fn load(path: &Path) -> Result<Self, MockWorkerScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| MockWorkerScriptError(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| MockWorkerScriptError(format!("parsing {}: {e}", path.display())))
    }

    fn load_rule(&self, source: &str) -> Option<&MockRule> {
        self.rules
            .iter()
            .find(|r| r.operator.is_none() && source.contains(&r.pattern))
    }

    fn test_rule(&self, source: &str, operator: &str) -> Option<&MockRule> {
        self.rules.iter().find(|r| {
            source.contains(&r.pattern) && r.operator.as_deref().is_none_or(|o| o == operator)
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct MockWorkerScriptError(String);

/// How [`serve`] ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServeEnd {
    Shutdown,
    PeerClosed,
    /// A scripted `exit`; the hosting process should exit with this code.
    Exit(i32),
    /// Unrecoverable stream error (oversized frame, I/O).
    Broken(String),
}

fn values_of(t: &TensorLiteral) -> Vec<f64> {
    match t {
        TensorLiteral::Values(l) => l.data.as_f64(),
        TensorLiteral::Seeded { shape, .. } => {
            let n: usize = shape.iter().product();
            (0..n.min(64)).map(|i| i as f64 / 8.0).collect()
        }
    }
}

pub fn accuracy_payload(case: &TestCase, cpu_values: &[f64], device_values: &[f64]) -> AccuracyPayload {
    let shape = vec![cpu_values.len()];
    let input_shape: Vec<Vec<usize>> = case.input_tensors.iter().map(|t| t.shape().to_vec()).collect();
    let excerpt = case
        .input_tensors
        .first()
        .map(|t| TensorSummary::from_values(t.dtype(), t.shape().to_vec(), &values_of(t)).to_string())
        .unwrap_or_default();
    AccuracyPayload {
        cpu_summary: TensorSummary::from_values(case.dtype, shape.clone(), cpu_values),
        device_summary: TensorSummary::from_values(case.dtype, shape, device_values),
        input_signature: format!("{}(input: Tensor[{}])", case.operator, case.dtype),
        output_signature: format!("Tensor[{}]", case.dtype),
        input_tensor_excerpt: if input_shape.len() > 1 {
            format!("{excerpt}\n(shapes {})", render_shapes(&input_shape))
        } else {
            excerpt
        },
        input_shape,
        input_args: case.input_args.clone(),
        input_kwargs: case.input_kwargs.clone(),
    }
}

/// Answers requests until shutdown, peer close, or a scripted exit.
pub fn serve<R: Read, W: Write>(reader: &mut R, writer: &mut W, script: &MockWorkerScript) -> ServeEnd {
    let mut loaded: Option<String> = None;
    loop {
        let env = match read_frame(reader) {
            Ok(env) => env,
            Err(CodecError::Closed) => return ServeEnd::PeerClosed,
            Err(e) if e.is_recoverable() => {
                let reply = Envelope::new(e.correlation_id().unwrap_or(0), Message::ProtocolError { detail: e.to_string() });
                if let Err(e) = write_frame(writer, &reply) {
                    return ServeEnd::Broken(e.to_string());
                }
                continue;
            }
            Err(e) => {
                let _ = write_frame(writer, &Envelope::new(0, Message::ProtocolError { detail: e.to_string() }));
                return ServeEnd::Broken(e.to_string());
            }
        };
        let reply = match env.message {
            Message::Capabilities {} => Message::CapabilitiesOk {
                backend: BackendMode::Mock,
                dtypes: script.dtypes.clone().unwrap_or_else(|| Dtype::ALL.to_vec()),
            },
            Message::Shutdown {} => return ServeEnd::Shutdown,
            Message::LoadCandidate { module_source } => {
                let action = script.load_rule(&module_source).map(|r| r.load.clone()).unwrap_or_default();
                match action {
                    LoadAction::Ok => {
                        loaded = Some(module_source);
                        Message::LoadOk {}
                    }
                    LoadAction::CompileError { log } => {
                        loaded = None;
                        Message::CompileError { log }
                    }
                    LoadAction::Exit { code } => return ServeEnd::Exit(code),
                    LoadAction::Hang { ms } => {
                        std::thread::sleep(Duration::from_millis(ms));
                        loaded = Some(module_source);
                        Message::LoadOk {}
                    }
                }
            }
            Message::RunTest { case, .. } => match &loaded {
                None => Message::ProtocolError {
                    detail: "run_test before a successful load_candidate".into(),
                },
                Some(source) => {
                    let action = script.test_rule(source, &case.operator).map(|r| r.test.clone()).unwrap_or_default();
                    match action {
                        TestAction::Pass => Message::TestPassed { case_id: case.case_id },
                        TestAction::Fail { cpu_values, device_values } => Message::TestFailed {
                            payload: accuracy_payload(&case, &cpu_values, &device_values),
                            case_id: case.case_id,
                        },
                        TestAction::Crash { crash_kind, frames, raw } => Message::RuntimeCrash {
                            case_id: case.case_id,
                            report: CrashReport::new(crash_kind, frames, None, &raw),
                        },
                        TestAction::Exit { code } => return ServeEnd::Exit(code),
                        TestAction::Hang { ms } => {
                            std::thread::sleep(Duration::from_millis(ms));
                            Message::TestPassed { case_id: case.case_id }
                        }
                    }
                }
            },
            other => Message::ProtocolError {
                detail: format!("unexpected {} message sent to worker", other.type_name()),
            },
        };
        if let Err(e) = write_frame(writer, &Envelope::new(env.id, reply)) {
            return ServeEnd::Broken(e.to_string());
        }
    }
}
