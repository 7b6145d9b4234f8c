//! Request/response payloads exchanged with execution workers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CrashReport, TolerancePolicy};
use crate::floats;
use crate::prompt::AccuracyPayload;
use crate::Dtype;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSource {
    OpInfoStyle,
    Captured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Uniform {
        #[serde(with = "floats::scalar")]
        low: f64,
        #[serde(with = "floats::scalar")]
        high: f64,
    },
    Normal {
        #[serde(with = "floats::scalar")]
        mean: f64,
        #[serde(with = "floats::scalar")]
        std: f64,
    },
    /// Integers drawn uniformly from `low..high`.
    IntRange { low: i64, high: i64 },
}

impl Distribution {
    pub fn default_for(dtype: Dtype) -> Self {
        if dtype.is_float() {
            Distribution::Normal { mean: 0.0, std: 1.0 }
        } else {
            Distribution::IntRange { low: -16, high: 16 }
        }
    }
}

/// Element storage of a literal tensor. Integer tensors keep exact `i64`s.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Float(Vec<f64>),
    Int(Vec<i64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::Float(v) => v.len(),
            TensorData::Int(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        match self {
            TensorData::Float(v) => v.clone(),
            TensorData::Int(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// Literal tensor: dtype, shape and row-major flattened values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLiteral", into = "RawLiteral")]
pub struct LiteralTensor {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLiteral {
    dtype: Dtype,
    shape: Vec<usize>,
    values: Vec<serde_json::Value>,
}

impl From<LiteralTensor> for RawLiteral {
    fn from(t: LiteralTensor) -> Self {
        let values = match t.data {
            TensorData::Float(v) => v.into_iter().map(floats::to_json).collect(),
            TensorData::Int(v) => v.into_iter().map(serde_json::Value::from).collect(),
        };
        RawLiteral {
            dtype: t.dtype,
            shape: t.shape,
            values,
        }
    }
}

impl TryFrom<RawLiteral> for LiteralTensor {
    type Error = String;

    fn try_from(raw: RawLiteral) -> Result<Self, String> {
        let data = if raw.dtype.is_float() {
            TensorData::Float(
                raw.values
                    .iter()
                    .map(floats::from_json)
                    .collect::<Result<_, _>>()?,
            )
        } else {
            TensorData::Int(
                raw.values
                    .iter()
                    .map(|v| v.as_i64().ok_or_else(|| format!("non-integer value {v} in {} tensor", raw.dtype)))
                    .collect::<Result<_, _>>()?,
            )
        };
        LiteralTensor::new(raw.dtype, raw.shape, data)
    }
}

impl LiteralTensor {
    pub fn new(dtype: Dtype, shape: Vec<usize>, data: TensorData) -> Result<Self, String> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(format!("shape {shape:?} holds {numel} elements but {} values were given", data.len()));
        }
        if dtype.is_float() != matches!(data, TensorData::Float(_)) {
            return Err(format!("value kind does not match dtype {dtype}"));
        }
        Ok(Self { dtype, shape, data })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TensorLiteral {
    Values(LiteralTensor),
    /// Materialized worker-side from a deterministic generator.
    Seeded {
        seed: u64,
        dtype: Dtype,
        shape: Vec<usize>,
        distribution: Distribution,
    },
}

impl TensorLiteral {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorLiteral::Values(t) => t.dtype,
            TensorLiteral::Seeded { dtype, .. } => *dtype,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorLiteral::Values(t) => &t.shape,
            TensorLiteral::Seeded { shape, .. } => shape,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub case_id: String,
    /// Reference operator the worker evaluates on the host.
    pub operator: String,
    pub dtype: Dtype,
    pub input_tensors: Vec<TensorLiteral>,
    #[serde(default)]
    pub input_args: Vec<serde_json::Value>,
    #[serde(default)]
    pub input_kwargs: BTreeMap<String, serde_json::Value>,
    pub source: TestSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Jit,
    Interpreter,
    Mock,
}

impl BackendMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendMode::Jit => "jit",
            BackendMode::Interpreter => "interpreter",
            BackendMode::Mock => "mock",
        }
    }
}

/// Every message kind on the wire. Requests flow orchestrator → worker,
/// the remaining variants flow back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Capabilities {},
    LoadCandidate { module_source: String },
    RunTest { case: TestCase, policy: TolerancePolicy },
    Shutdown {},

    CapabilitiesOk { backend: BackendMode, dtypes: Vec<Dtype> },
    LoadOk {},
    CompileError { log: String },
    TestPassed { case_id: String },
    TestFailed { case_id: String, payload: AccuracyPayload },
    RuntimeCrash { case_id: String, report: CrashReport },
    ProtocolError { detail: String },
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Capabilities {} => "capabilities",
            Message::LoadCandidate { .. } => "load_candidate",
            Message::RunTest { .. } => "run_test",
            Message::Shutdown {} => "shutdown",
            Message::CapabilitiesOk { .. } => "capabilities_ok",
            Message::LoadOk {} => "load_ok",
            Message::CompileError { .. } => "compile_error",
            Message::TestPassed { .. } => "test_passed",
            Message::TestFailed { .. } => "test_failed",
            Message::RuntimeCrash { .. } => "runtime_crash",
            Message::ProtocolError { .. } => "protocol_error",
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(
            self,
            Message::Capabilities {} | Message::LoadCandidate { .. } | Message::RunTest { .. } | Message::Shutdown {}
        )
    }
}
