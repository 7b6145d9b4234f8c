use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{OperatorCatalog, OperatorSpec};
use crate::Dtype;

/// Platform-compatibility policy applied before scheduling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterPolicy {
    /// Operators with `test_count >= max_test_count` are dropped.
    pub max_test_count: u32,
    pub exclude_tags: BTreeSet<String>,
    pub allowed_dtypes: BTreeSet<Dtype>,
    /// When set, only these operators survive (retry-failed mode).
    pub include_only: Option<BTreeSet<String>>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            max_test_count: 900,
            exclude_tags: ["complex", "random"].into_iter().map(String::from).collect(),
            allowed_dtypes: Dtype::ALL.into_iter().collect(),
            include_only: None,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_test_count == 0 {
            return Err("max_test_count must be positive".into());
        }
        Ok(())
    }

    fn admits(&self, op: &OperatorSpec) -> bool {
        if let Some(only) = &self.include_only {
            if !only.contains(&op.name) {
                return false;
            }
        }
        op.test_count < self.max_test_count && op.tags.is_disjoint(&self.exclude_tags)
    }
}

/// Applies `policy` to every operator. The result is sorted by name, dtype
/// sets are intersected with `allowed_dtypes`, and operators left without any
/// testable dtype are dropped.
pub fn filter_operators(catalog: &OperatorCatalog, policy: &FilterPolicy) -> Vec<OperatorSpec> {
    filter_specs(catalog.operators(), policy)
}

pub(crate) fn filter_specs<'a>(
    ops: impl IntoIterator<Item = &'a OperatorSpec>,
    policy: &FilterPolicy,
) -> Vec<OperatorSpec> {
    let mut out: Vec<OperatorSpec> = ops
        .into_iter()
        .filter(|op| policy.admits(op))
        .filter_map(|op| {
            let dtypes: BTreeSet<Dtype> = op
                .dtypes
                .intersection(&policy.allowed_dtypes)
                .copied()
                .collect();
            if dtypes.is_empty() {
                return None;
            }
            Some(OperatorSpec {
                dtypes,
                ..op.clone()
            })
        })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::OperatorCategory;
    use proptest::prelude::*;

    fn op(name: &str, tests: u32, tags: &[&str], dtypes: &[Dtype]) -> OperatorSpec {
        OperatorSpec {
            name: name.into(),
            docstring: format!("{name} doc"),
            referenced_ops: vec![],
            dtypes: dtypes.iter().copied().collect(),
            test_count: tests,
            tags: tags.iter().map(|t| t.to_string()).collect(),
            category: OperatorCategory::Other,
            samples: vec![],
        }
    }

    fn catalog(ops: Vec<OperatorSpec>) -> OperatorCatalog {
        OperatorCatalog::from_specs(ops, vec![]).unwrap()
    }

    #[test]
    fn complex_tagged_op_excluded() {
        let c = catalog(vec![
            op("fft.fft", 10, &["complex"], &[Dtype::Float32]),
            op("exp", 10, &[], &[Dtype::Float32]),
        ]);
        let names: Vec<_> = filter_operators(&c, &FilterPolicy::default())
            .into_iter()
            .map(|o| o.name)
            .collect();
        assert_eq!(names, vec!["exp"]);
    }

    #[test]
    fn test_count_threshold_is_strict() {
        let c = catalog(vec![
            op("a", 900, &[], &[Dtype::Float32]),
            op("b", 899, &[], &[Dtype::Float32]),
        ]);
        let names: Vec<_> = filter_operators(&c, &FilterPolicy::default())
            .into_iter()
            .map(|o| o.name)
            .collect();
        assert_eq!(names, vec!["b"]);
    }

    #[test]
    fn empty_catalog_filters_to_empty() {
        assert!(filter_operators(&catalog(vec![]), &FilterPolicy::default()).is_empty());
    }

    #[test]
    fn dtypes_restricted_and_empty_sets_dropped() {
        let c = catalog(vec![
            op("a", 1, &[], &[Dtype::Float32, Dtype::Int64]),
            op("b", 1, &[], &[Dtype::Int64]),
        ]);
        let policy = FilterPolicy {
            allowed_dtypes: [Dtype::Float32].into_iter().collect(),
            ..Default::default()
        };
        let out = filter_operators(&c, &policy);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dtypes, [Dtype::Float32].into_iter().collect());
    }

    #[test]
    fn include_only_selects_named_operators() {
        let c = catalog(vec![op("a", 1, &[], &[Dtype::Float32]), op("b", 1, &[], &[Dtype::Float32])]);
        let policy = FilterPolicy {
            include_only: Some(["b".to_string()].into_iter().collect()),
            ..Default::default()
        };
        assert_eq!(filter_operators(&c, &policy)[0].name, "b");
    }

    #[test]
    fn zero_max_test_count_is_invalid() {
        let p = FilterPolicy {
            max_test_count: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    fn arb_op(i: usize) -> impl Strategy<Value = OperatorSpec> {
        (
            0u32..1200,
            proptest::sample::subsequence(vec!["complex", "random", "inplace"], 0..3),
            proptest::sample::subsequence(Dtype::ALL.to_vec(), 0..5),
        )
            .prop_map(move |(t, tags, dtypes)| op(&format!("op{i}"), t, &tags, &dtypes))
    }

    proptest! {
        #[test]
        fn filtering_is_idempotent(
            ops in (0usize..15).prop_flat_map(|n| (0..n).map(arb_op).collect::<Vec<_>>()),
            max in 1u32..1000,
            allowed in proptest::sample::subsequence(Dtype::ALL.to_vec(), 0..5),
        ) {
            let policy = FilterPolicy {
                max_test_count: max,
                allowed_dtypes: allowed.into_iter().collect(),
                ..Default::default()
            };
            let once = filter_specs(&ops, &policy);
            let twice = filter_specs(&once, &policy);
            prop_assert_eq!(&once, &twice);
            for o in &once {
                prop_assert!(o.test_count < max);
                prop_assert!(o.dtypes.is_subset(&policy.allowed_dtypes));
                prop_assert!(!o.dtypes.is_empty());
            }
            prop_assert!(once.windows(2).all(|w| w[0].name < w[1].name));
        }
    }
}
