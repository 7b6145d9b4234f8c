//! Bounded tensor summaries and the accuracy-failure payload.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::floats;
use crate::Dtype;

/// Elements kept from each end of a tensor in a summary excerpt.
pub const EXCERPT_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorStats {
    /// Over non-NaN elements.
    #[serde(with = "floats::option")]
    pub min: Option<f64>,
    #[serde(with = "floats::option")]
    pub max: Option<f64>,
    /// Over finite elements.
    #[serde(with = "floats::option")]
    pub mean: Option<f64>,
    pub nan_count: u64,
    pub inf_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSummary {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub numel: u64,
    /// First elements in flattened order; all of them when the tensor is small.
    #[serde(with = "floats::vec")]
    pub head: Vec<f64>,
    /// Last elements; empty when `head` already holds the whole tensor.
    #[serde(with = "floats::vec")]
    pub tail: Vec<f64>,
    pub stats: TensorStats,
}

impl TensorSummary {
    pub fn from_values(dtype: Dtype, shape: Vec<usize>, values: &[f64]) -> Self {
        Self::with_cap(dtype, shape, values, EXCERPT_CAP)
    }

    pub fn with_cap(dtype: Dtype, shape: Vec<usize>, values: &[f64], cap: usize) -> Self {
        let (head, tail) = if values.len() <= 2 * cap {
            (values.to_vec(), Vec::new())
        } else {
            (values[..cap].to_vec(), values[values.len() - cap..].to_vec())
        };
        let mut min: Option<f64> = None;
        let mut max: Option<f64> = None;
        let mut sum = 0.0;
        let mut finite = 0u64;
        let mut nan_count = 0;
        let mut inf_count = 0;
        for &v in values {
            if v.is_nan() {
                nan_count += 1;
                continue;
            }
            min = Some(min.map_or(v, |m| m.min(v)));
            max = Some(max.map_or(v, |m| m.max(v)));
            if v.is_infinite() {
                inf_count += 1;
            } else {
                sum += v;
                finite += 1;
            }
        }
        Self {
            dtype,
            shape,
            numel: values.len() as u64,
            head,
            tail,
            stats: TensorStats {
                min,
                max,
                mean: (finite > 0).then(|| sum / finite as f64),
                nan_count,
                inf_count,
            },
        }
    }

    pub fn excerpt_len(&self) -> usize {
        self.head.len() + self.tail.len()
    }
}

pub fn fmt_value(v: f64, dtype: Dtype) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if !dtype.is_float() && v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn fmt_opt(v: Option<f64>, dtype: Dtype) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| fmt_value(x, dtype))
}

impl fmt::Display for TensorSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        writeln!(
            f,
            "tensor(dtype={}, shape=[{}], numel={})",
            self.dtype,
            dims.join(", "),
            self.numel
        )?;
        let head: Vec<String> = self.head.iter().map(|v| fmt_value(*v, self.dtype)).collect();
        if self.tail.is_empty() {
            writeln!(f, "values: [{}]", head.join(", "))?;
        } else {
            let tail: Vec<String> = self.tail.iter().map(|v| fmt_value(*v, self.dtype)).collect();
            writeln!(
                f,
                "values (first {} / last {}): [{}, ..., {}]",
                head.len(),
                tail.len(),
                head.join(", "),
                tail.join(", ")
            )?;
        }
        write!(
            f,
            "stats: min={} max={} mean={} nan_count={} inf_count={}",
            fmt_opt(self.stats.min, self.dtype),
            fmt_opt(self.stats.max, self.dtype),
            fmt_opt(self.stats.mean, Dtype::Float32),
            self.stats.nan_count,
            self.stats.inf_count
        )
    }
}

/// Everything a worker reports about the first failing accuracy test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPayload {
    pub cpu_summary: TensorSummary,
    pub device_summary: TensorSummary,
    pub input_signature: String,
    pub output_signature: String,
    /// One shape per tensor input.
    pub input_shape: Vec<Vec<usize>>,
    pub input_tensor_excerpt: String,
    #[serde(default)]
    pub input_args: Vec<serde_json::Value>,
    #[serde(default)]
    pub input_kwargs: BTreeMap<String, serde_json::Value>,
}

/// Python-literal rendering of a JSON value (`None`, `True`, `'str'`, ...).
pub fn python_repr(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Null => "None".into(),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        Value::Array(items) => {
            format!("[{}]", items.iter().map(python_repr).collect::<Vec<_>>().join(", "))
        }
        Value::Object(map) => format!(
            "{{{}}}",
            map.iter()
                .map(|(k, v)| format!("'{k}': {}", python_repr(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

pub fn render_shapes(shapes: &[Vec<usize>]) -> String {
    let one = |s: &Vec<usize>| {
        format!("[{}]", s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "))
    };
    if shapes.len() == 1 {
        one(&shapes[0])
    } else {
        format!("[{}]", shapes.iter().map(one).collect::<Vec<_>>().join(", "))
    }
}

impl AccuracyPayload {
    pub fn rendered_args(&self) -> String {
        python_repr(&serde_json::Value::Array(self.input_args.clone()))
    }

    pub fn rendered_kwargs(&self) -> String {
        python_repr(&serde_json::Value::Object(
            self.input_kwargs.clone().into_iter().collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_tensor_keeps_everything() {
        let s = TensorSummary::from_values(Dtype::Float32, vec![4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.head, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(s.tail.is_empty());
        assert_eq!(s.stats.mean, Some(2.5));
        assert_eq!(
            s.to_string(),
            "tensor(dtype=float32, shape=[4], numel=4)\nvalues: [1.0, 2.0, 3.0, 4.0]\nstats: min=1.0 max=4.0 mean=2.5 nan_count=0 inf_count=0"
        );
    }

    #[test]
    fn large_tensor_is_elided() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let s = TensorSummary::from_values(Dtype::Int32, vec![10, 10], &v);
        assert_eq!(s.head, (0..8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(s.tail, (92..100).map(f64::from).collect::<Vec<_>>());
        assert!(s.to_string().contains("[0, 1, 2, 3, 4, 5, 6, 7, ..., 92,"));
        assert_eq!(s.stats.max, Some(99.0));
    }

    #[test]
    fn non_finite_counts() {
        let s = TensorSummary::from_values(
            Dtype::Float16,
            vec![4],
            &[f64::NAN, f64::INFINITY, -1.0, 3.0],
        );
        assert_eq!(s.stats.nan_count, 1);
        assert_eq!(s.stats.inf_count, 1);
        assert_eq!(s.stats.max, Some(f64::INFINITY));
        assert_eq!(s.stats.mean, Some(1.0));
        let empty = TensorSummary::from_values(Dtype::Float32, vec![0], &[]);
        assert_eq!(empty.stats.mean, None);
    }

    #[test]
    fn python_literals() {
        let v = serde_json::json!([1, "a'b", null, true, {"dim": -1}]);
        assert_eq!(python_repr(&v), "[1, 'a\\'b', None, True, {'dim': -1}]");
        assert_eq!(render_shapes(&[vec![2, 3]]), "[2, 3]");
        assert_eq!(render_shapes(&[vec![2], vec![3]]), "[[2], [3]]");
    }

    proptest! {
        #[test]
        fn excerpt_bounded_and_stats_over_all(v in prop::collection::vec(-1e6f64..1e6, 0..200)) {
            let s = TensorSummary::from_values(Dtype::Float32, vec![v.len()], &v);
            prop_assert!(s.excerpt_len() <= 2 * EXCERPT_CAP);
            prop_assert_eq!(s.numel as usize, v.len());
            let oracle_max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !v.is_empty() {
                prop_assert_eq!(s.stats.max, Some(oracle_max));
            }
        }
    }
}
