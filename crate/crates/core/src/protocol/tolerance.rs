//! Per-dtype closeness check between candidate and reference outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::floats;
use crate::Dtype;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    #[serde(with = "floats::scalar")]
    pub rtol: f64,
    #[serde(with = "floats::scalar")]
    pub atol: f64,
}

/// Float dtypes compare as `|a - b| <= atol + rtol * |b|` (b = reference);
/// integer dtypes compare exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancePolicy {
    pub float_tolerances: BTreeMap<Dtype, Tolerance>,
    #[serde(default = "yes")]
    pub nan_equal: bool,
}

fn yes() -> bool {
    true
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        default_tolerances()
    }
}

pub fn default_tolerances() -> TolerancePolicy {
    let t = |rtol, atol| Tolerance { rtol, atol };
    TolerancePolicy {
        float_tolerances: BTreeMap::from([
            (Dtype::Float32, t(1.3e-6, 1e-5)),
            (Dtype::Float16, t(1e-3, 1e-5)),
            (Dtype::Bfloat16, t(1.6e-2, 1e-5)),
        ]),
        nan_equal: true,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToleranceError {
    #[error("tolerance for {dtype} must be finite and non-negative (rtol {rtol}, atol {atol})")]
    Negative { dtype: Dtype, rtol: f64, atol: f64 },
    #[error("{0} is an integer dtype and always compares exactly")]
    IntegerDtype(Dtype),
}

/// First element that failed the comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub actual: f64,
    pub expected: f64,
}

impl TolerancePolicy {
    pub fn validate(&self) -> Result<(), ToleranceError> {
        for (&dtype, t) in &self.float_tolerances {
            if !dtype.is_float() {
                return Err(ToleranceError::IntegerDtype(dtype));
            }
            let ok = |x: f64| x.is_finite() && x >= 0.0;
            if !ok(t.rtol) || !ok(t.atol) {
                return Err(ToleranceError::Negative {
                    dtype,
                    rtol: t.rtol,
                    atol: t.atol,
                });
            }
        }
        Ok(())
    }

    /// `None` means exact comparison.
    pub fn tolerance(&self, dtype: Dtype) -> Option<Tolerance> {
        if dtype.is_float() {
            Some(self.float_tolerances.get(&dtype).copied().unwrap_or(Tolerance { rtol: 0.0, atol: 0.0 }))
        } else {
            None
        }
    }

    pub fn is_close(&self, actual: f64, expected: f64, dtype: Dtype) -> bool {
        if actual.is_nan() || expected.is_nan() {
            return self.nan_equal && actual.is_nan() && expected.is_nan();
        }
        if actual == expected {
            return true;
        }
        if actual.is_infinite() || expected.is_infinite() {
            return false;
        }
        match self.tolerance(dtype) {
            None => false,
            Some(t) => (actual - expected).abs() <= t.atol + t.rtol * expected.abs(),
        }
    }

    pub fn check(&self, actual: &[f64], expected: &[f64], dtype: Dtype) -> Result<(), Option<Mismatch>> {
        if actual.len() != expected.len() {
            return Err(None);
        }
        match actual
            .iter()
            .zip(expected)
            .position(|(&a, &b)| !self.is_close(a, b, dtype))
        {
            None => Ok(()),
            Some(index) => Err(Some(Mismatch {
                index,
                actual: actual[index],
                expected: expected[index],
            })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_values() {
        let p = default_tolerances();
        let get = |d| p.tolerance(d).unwrap();
        assert_eq!(get(Dtype::Float32), Tolerance { rtol: 1.3e-6, atol: 1e-5 });
        assert_eq!(get(Dtype::Float16), Tolerance { rtol: 1e-3, atol: 1e-5 });
        assert_eq!(get(Dtype::Bfloat16), Tolerance { rtol: 1.6e-2, atol: 1e-5 });
        assert_eq!(p.tolerance(Dtype::Int32), None);
        assert_eq!(p.tolerance(Dtype::Int64), None);
        assert!(p.nan_equal);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn spec_examples() {
        let p = default_tolerances();
        assert!(p.is_close(1.0 + 1e-7, 1.0, Dtype::Float32));
        assert!(!p.is_close(6.0, 5.0, Dtype::Int32));
        assert!(p.is_close(f64::NAN, f64::NAN, Dtype::Float32));
        let strict = TolerancePolicy {
            nan_equal: false,
            ..p.clone()
        };
        assert!(!strict.is_close(f64::NAN, f64::NAN, Dtype::Float32));
        assert!(p.is_close(f64::INFINITY, f64::INFINITY, Dtype::Float16));
        assert!(!p.is_close(f64::INFINITY, f64::NEG_INFINITY, Dtype::Float16));
        assert_eq!(
            p.check(&[1.0, 2.0, 3.5], &[1.0, 2.0, 3.0], Dtype::Float32),
            Err(Some(Mismatch {
                index: 2,
                actual: 3.5,
                expected: 3.0
            }))
        );
        assert_eq!(p.check(&[1.0], &[1.0, 2.0], Dtype::Float32), Err(None));
    }

    #[test]
    fn validation_rejects_bad_entries() {
        let mut p = default_tolerances();
        p.float_tolerances.insert(Dtype::Float32, Tolerance { rtol: -1.0, atol: 0.0 });
        assert!(p.validate().is_err());
        let mut p = default_tolerances();
        p.float_tolerances.insert(Dtype::Int32, Tolerance { rtol: 0.0, atol: 0.0 });
        assert_eq!(p.validate(), Err(ToleranceError::IntegerDtype(Dtype::Int32)));
    }

    #[test]
    fn serde_shape() {
        let json = serde_json::to_value(default_tolerances()).unwrap();
        assert_eq!(json["float_tolerances"]["float32"]["rtol"], 1.3e-6);
        assert_eq!(json["nan_equal"], true);
        let back: TolerancePolicy = serde_json::from_value(json).unwrap();
        assert_eq!(back, default_tolerances());
    }

    /// Independent elementwise oracle.
    fn oracle(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
        if a.is_nan() || b.is_nan() {
            return a.is_nan() && b.is_nan();
        }
        if a.is_infinite() || b.is_infinite() {
            return a == b;
        }
        let diff = if a > b { a - b } else { b - a };
        let mag = if b < 0.0 { -b } else { b };
        diff <= atol + rtol * mag
    }

    fn float_dtype() -> impl Strategy<Value = Dtype> {
        prop_oneof![Just(Dtype::Float32), Just(Dtype::Float16), Just(Dtype::Bfloat16)]
    }

    fn value() -> impl Strategy<Value = f64> {
        prop_oneof![
            8 => -1e3f64..1e3,
            1 => Just(f64::NAN),
            1 => Just(f64::INFINITY),
            1 => Just(0.0),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn matches_oracle(
            a in value(),
            rel in -1e-2f64..1e-2,
            b_noise in prop::bool::ANY,
            dtype in float_dtype(),
        ) {
            let p = default_tolerances();
            let t = p.tolerance(dtype).unwrap();
            let b = if b_noise { a * (1.0 + rel) } else { a + rel };
            prop_assert_eq!(p.is_close(a, b, dtype), oracle(a, b, t.rtol, t.atol));
        }
    }

    proptest! {
        #[test]
        fn reflexive(values in prop::collection::vec(value(), 0..64), dtype in prop::sample::select(Dtype::ALL.to_vec())) {
            let p = default_tolerances();
            let values: Vec<f64> = if dtype.is_float() { values } else { values.into_iter().filter(|v| v.is_finite()).map(f64::round).collect() };
            prop_assert!(p.check(&values, &values, dtype).is_ok());
        }

        #[test]
        fn scale_consistent_without_atol(
            a in -1e6f64..1e6,
            b in -1e6f64..1e6,
            shift in -20i32..20,
            rtol in 0.0f64..0.1,
        ) {
            let mut p = default_tolerances();
            p.float_tolerances.insert(Dtype::Float32, Tolerance { rtol, atol: 0.0 });
            // Powers of two scale exactly, so closeness must be preserved.
            let k = 2f64.powi(shift);
            prop_assert_eq!(p.is_close(a, b, Dtype::Float32), p.is_close(a * k, b * k, Dtype::Float32));
        }
    }
}
