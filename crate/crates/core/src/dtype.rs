use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Element types the harness generates and tests kernels for.
///
/// The derived ordering is the canonical listing order used in prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Bfloat16,
    Float16,
    Float32,
    Int32,
    Int64,
}

impl Dtype {
    pub const ALL: [Dtype; 5] = [
        Dtype::Bfloat16,
        Dtype::Float16,
        Dtype::Float32,
        Dtype::Int32,
        Dtype::Int64,
    ];

    /// Order in which test groups are executed: one compile per dtype, most
    /// forgiving float type first.
    pub const EXECUTION_ORDER: [Dtype; 5] = [
        Dtype::Float32,
        Dtype::Bfloat16,
        Dtype::Float16,
        Dtype::Int32,
        Dtype::Int64,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::Bfloat16 => "bfloat16",
            Dtype::Float16 => "float16",
            Dtype::Float32 => "float32",
            Dtype::Int32 => "int32",
            Dtype::Int64 => "int64",
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, Dtype::Bfloat16 | Dtype::Float16 | Dtype::Float32)
    }

    pub fn execution_rank(self) -> usize {
        Self::EXECUTION_ORDER
            .iter()
            .position(|d| *d == self)
            .expect("every dtype has an execution rank")
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported dtype `{0}` (expected one of bfloat16, float16, float32, int32, int64)")]
pub struct UnknownDtype(pub String);

impl FromStr for Dtype {
    type Err = UnknownDtype;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bfloat16" => Ok(Dtype::Bfloat16),
            "float16" => Ok(Dtype::Float16),
            "float32" => Ok(Dtype::Float32),
            "int32" => Ok(Dtype::Int32),
            "int64" => Ok(Dtype::Int64),
            other => Err(UnknownDtype(other.to_string())),
        }
    }
}

/// Renders a dtype set the way a Python `str(list)` would, e.g.
/// `['bfloat16', 'float32']`.
pub fn python_list<'a>(dtypes: impl IntoIterator<Item = &'a Dtype>) -> String {
    let items: Vec<String> = dtypes.into_iter().map(|d| format!("'{d}'")).collect();
    format!("[{}]", items.join(", "))
}
