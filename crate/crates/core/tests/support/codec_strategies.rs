//! Proptest strategies for protocol messages, shared by the codec tests and
//! the acceptance target.

use std::collections::BTreeMap;

use opforge_core::prompt::{AccuracyPayload, TensorSummary};
use opforge_core::protocol::*;
use opforge_core::Dtype;
use proptest::prelude::*;
use serde_json::Value;

pub fn dtype() -> impl Strategy<Value = Dtype> {
    prop::sample::select(Dtype::ALL.to_vec())
}

pub fn float() -> impl Strategy<Value = f64> {
    prop_oneof![
        6 => any::<f64>().prop_filter("finite", |v| v.is_finite()),
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
        1 => Just(-0.0),
    ]
}

pub fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z_]{0,12}",
        any::<String>().prop_map(|s| s.chars().take(40).collect()),
    ]
}

pub fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        (-1e9f64..1e9).prop_map(Value::from),
        "[a-z]{0,6}".prop_map(Value::from),
    ];
    leaf.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,4}", inner, 0..3).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

pub fn literal() -> impl Strategy<Value = TensorLiteral> {
    let values = (dtype(), prop::collection::vec(1usize..4, 0..3)).prop_flat_map(|(d, shape)| {
        let n: usize = shape.iter().product();
        let data = if d.is_float() {
            prop::collection::vec(float(), n).prop_map(TensorData::Float).boxed()
        } else {
            prop::collection::vec(any::<i64>(), n).prop_map(TensorData::Int).boxed()
        };
        data.prop_map(move |data| TensorLiteral::Values(LiteralTensor::new(d, shape.clone(), data).unwrap()))
    });
    let dist = prop_oneof![
        ((-10.0f64..0.0), (0.0f64..10.0)).prop_map(|(low, high)| Distribution::Uniform { low, high }),
        ((-1.0f64..1.0), (0.1f64..3.0)).prop_map(|(mean, std)| Distribution::Normal { mean, std }),
        (-100i64..0, 0i64..100).prop_map(|(low, high)| Distribution::IntRange { low, high }),
    ];
    let seeded = (any::<u64>(), dtype(), prop::collection::vec(0usize..1000, 0..4), dist)
        .prop_map(|(seed, dtype, shape, distribution)| TensorLiteral::Seeded { seed, dtype, shape, distribution });
    prop_oneof![values, seeded]
}

pub fn test_case() -> impl Strategy<Value = TestCase> {
    (
        text(),
        text(),
        dtype(),
        prop::collection::vec(literal(), 0..3),
        prop::collection::vec(json_value(), 0..3),
        prop::collection::btree_map("[a-z]{1,5}", json_value(), 0..3),
        prop::bool::ANY,
    )
        .prop_map(|(case_id, operator, dtype, input_tensors, input_args, input_kwargs, captured)| TestCase {
            case_id,
            operator,
            dtype,
            input_tensors,
            input_args,
            input_kwargs,
            source: if captured { TestSource::Captured } else { TestSource::OpInfoStyle },
        })
}

pub fn policy() -> impl Strategy<Value = TolerancePolicy> {
    (prop::collection::btree_map(
        prop::sample::select(vec![Dtype::Float32, Dtype::Float16, Dtype::Bfloat16]),
        (0.0f64..1.0, 0.0f64..1.0).prop_map(|(rtol, atol)| Tolerance { rtol, atol }),
        0..3,
    ), any::<bool>())
        .prop_map(|(float_tolerances, nan_equal)| TolerancePolicy { float_tolerances, nan_equal })
}

pub fn summary() -> impl Strategy<Value = TensorSummary> {
    (dtype(), prop::collection::vec(float(), 0..40))
        .prop_map(|(d, v)| TensorSummary::from_values(d, vec![v.len()], &v))
}

pub fn payload() -> impl Strategy<Value = AccuracyPayload> {
    (summary(), summary(), text(), prop::collection::vec(prop::collection::vec(0usize..9, 0..3), 0..3), prop::collection::vec(json_value(), 0..2))
        .prop_map(|(cpu, dev, sig, shapes, args)| AccuracyPayload {
            cpu_summary: cpu,
            device_summary: dev,
            input_signature: sig.clone(),
            output_signature: sig,
            input_shape: shapes,
            input_tensor_excerpt: "tensor(...)".into(),
            input_args: args,
            input_kwargs: BTreeMap::new(),
        })
}

pub fn crash() -> impl Strategy<Value = CrashReport> {
    (text(), prop::collection::vec((text(), text()), 0..4), prop::option::of(text()), text()).prop_map(|(k, frames, regs, raw)| {
        CrashReport::new(
            k,
            frames.into_iter().map(|(function, location)| BacktraceFrame { function, location }).collect(),
            regs,
            &raw,
        )
    })
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        Just(Message::Capabilities {}),
        Just(Message::Shutdown {}),
        Just(Message::LoadOk {}),
        text().prop_map(|module_source| Message::LoadCandidate { module_source }),
        (test_case(), policy()).prop_map(|(case, policy)| Message::RunTest { case, policy }),
        (prop::sample::select(vec![BackendMode::Jit, BackendMode::Interpreter, BackendMode::Mock]), prop::collection::vec(dtype(), 0..5))
            .prop_map(|(backend, dtypes)| Message::CapabilitiesOk { backend, dtypes }),
        text().prop_map(|log| Message::CompileError { log }),
        text().prop_map(|case_id| Message::TestPassed { case_id }),
        (text(), payload()).prop_map(|(case_id, payload)| Message::TestFailed { case_id, payload }),
        (text(), crash()).prop_map(|(case_id, report)| Message::RuntimeCrash { case_id, report }),
        text().prop_map(|detail| Message::ProtocolError { detail }),
    ]
}
