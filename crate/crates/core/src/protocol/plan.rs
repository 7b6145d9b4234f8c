//! Test-plan construction from catalog samples and captured inputs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Distribution, TensorLiteral, TestCase, TestSource};
use crate::catalog::{OperatorSpec, SampleSpec};

/// Which test sources a session runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSourcePolicy {
    #[default]
    OpInfoStyle,
    CapturedInputs,
    Both,
}

/// Shapes used for single-input operators whose catalog record lists no
/// samples. 33 and 65 are deliberately not multiples of common block sizes.
pub const DEFAULT_SAMPLE_SHAPES: [&[usize]; 3] = [&[8], &[33], &[4, 65]];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("operator {0} has no tests under the selected source")]
    Empty(String),
}

fn default_samples() -> Vec<SampleSpec> {
    DEFAULT_SAMPLE_SHAPES
        .iter()
        .map(|s| SampleSpec {
            shapes: vec![s.to_vec()],
            ..SampleSpec::default()
        })
        .collect()
}

/// Stable seed for one input tensor, independent of platform and run order.
pub fn derive_seed(plan_seed: u64, case_id: &str, tensor_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(plan_seed.to_be_bytes());
    h.update(case_id.as_bytes());
    h.update((tensor_index as u64).to_be_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// OpInfo-style cases: every catalog dtype crossed with every sample.
pub fn opinfo_cases(op: &OperatorSpec, plan_seed: u64) -> Vec<TestCase> {
    let samples = if op.samples.is_empty() {
        default_samples()
    } else {
        op.samples.clone()
    };
    let mut cases = vec![];
    for &dtype in &op.dtypes {
        for (i, sample) in samples.iter().enumerate() {
            let case_id = format!("{}/{}/opinfo/{i}", op.name, dtype);
            let input_tensors = sample
                .shapes
                .iter()
                .enumerate()
                .map(|(t, shape)| TensorLiteral::Seeded {
                    seed: derive_seed(plan_seed, &case_id, t),
                    dtype,
                    shape: shape.clone(),
                    distribution: Distribution::default_for(dtype),
                })
                .collect();
            cases.push(TestCase {
                case_id,
                operator: op.name.clone(),
                dtype,
                input_tensors,
                input_args: sample.args.clone(),
                input_kwargs: sample.kwargs.clone(),
                source: TestSource::OpInfoStyle,
            });
        }
    }
    cases
}

/// Orders cases dtype-major (float32, bfloat16, float16, int32, int64),
/// keeping the relative order within each dtype, and makes ids unique.
pub fn order_cases(mut cases: Vec<TestCase>) -> Vec<TestCase> {
    cases.sort_by_key(|c| c.dtype.execution_rank());
    let mut seen = BTreeSet::new();
    for c in &mut cases {
        if !seen.insert(c.case_id.clone()) {
            let base = c.case_id.clone();
            let mut n = 1;
            while !seen.insert(format!("{base}#{n}")) {
                n += 1;
            }
            c.case_id = format!("{base}#{n}");
        }
    }
    cases
}

/// The ordered plan for one operator. Captured cases for other operators or
/// for dtypes the operator does not support are ignored.
pub fn plan_tests(
    op: &OperatorSpec,
    policy: TestSourcePolicy,
    captured: &[TestCase],
    plan_seed: u64,
) -> Result<Vec<TestCase>, PlanError> {
    let mut cases = vec![];
    if matches!(policy, TestSourcePolicy::OpInfoStyle | TestSourcePolicy::Both) {
        cases.extend(opinfo_cases(op, plan_seed));
    }
    if matches!(policy, TestSourcePolicy::CapturedInputs | TestSourcePolicy::Both) {
        cases.extend(
            captured
                .iter()
                .filter(|c| c.operator == op.name && op.dtypes.contains(&c.dtype))
                .cloned(),
        );
    }
    if cases.is_empty() {
        return Err(PlanError::Empty(op.name.clone()));
    }
    Ok(order_cases(cases))
}
