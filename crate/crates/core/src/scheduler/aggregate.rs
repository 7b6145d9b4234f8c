//! Cross-run union, category breakdown and the cumulative calls curve.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::report::{fraction, RunReport};
use crate::catalog::OperatorCategory;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("catalog fingerprint mismatch: {expected} vs {found} (run {run_id})")]
    CatalogMismatch {
        expected: String,
        found: String,
        run_id: String,
    },
    #[error("nothing to aggregate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub operators: usize,
    pub passed: usize,
    pub coverage: f64,
    pub max_calls: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateEntry {
    pub category: OperatorCategory,
    /// Smallest calls-to-success over the runs where the operator passed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_calls_to_success: Option<u32>,
    pub passing_runs: BTreeSet<String>,
}

impl AggregateEntry {
    pub fn passed(&self) -> bool {
        !self.passing_runs.is_empty()
    }
}

/// Union of several runs. Members are keyed by run id, so merging is
/// commutative, associative and idempotent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub catalog_fingerprint: String,
    pub members: BTreeMap<String, MemberSummary>,
    pub operators: BTreeMap<String, AggregateEntry>,
    pub operators_total: usize,
    pub passed: usize,
    pub coverage: f64,
}

impl AggregateReport {
    pub fn from_run(r: &RunReport) -> Self {
        let operators = r
            .operators
            .iter()
            .map(|o| {
                let passing_runs = if o.passed() { BTreeSet::from([r.run_id.clone()]) } else { BTreeSet::new() };
                (
                    o.operator.clone(),
                    AggregateEntry {
                        category: o.category,
                        min_calls_to_success: o.calls_to_success.filter(|_| o.passed()),
                        passing_runs,
                    },
                )
            })
            .collect();
        let member = MemberSummary {
            operators: r.totals.operators,
            passed: r.totals.passed,
            coverage: r.totals.coverage,
            max_calls: r.config.max_calls(),
        };
        Self::assemble(r.catalog_fingerprint.clone(), BTreeMap::from([(r.run_id.clone(), member)]), operators)
    }

    fn assemble(
        catalog_fingerprint: String,
        members: BTreeMap<String, MemberSummary>,
        operators: BTreeMap<String, AggregateEntry>,
    ) -> Self {
        let passed = operators.values().filter(|e| e.passed()).count();
        Self {
            catalog_fingerprint,
            operators_total: operators.len(),
            passed,
            coverage: fraction(passed, operators.len()),
            members,
            operators,
        }
    }

    pub fn merge(&self, other: &AggregateReport) -> Result<AggregateReport, AggregateError> {
        if self.catalog_fingerprint != other.catalog_fingerprint {
            return Err(AggregateError::CatalogMismatch {
                expected: self.catalog_fingerprint.clone(),
                found: other.catalog_fingerprint.clone(),
                run_id: other.members.keys().next().cloned().unwrap_or_default(),
            });
        }
        let mut members = self.members.clone();
        for (k, v) in &other.members {
            members.entry(k.clone()).or_insert_with(|| v.clone());
        }
        let mut operators = self.operators.clone();
        for (name, e) in &other.operators {
            operators
                .entry(name.clone())
                .and_modify(|mine| {
                    mine.passing_runs.extend(e.passing_runs.iter().cloned());
                    mine.min_calls_to_success = match (mine.min_calls_to_success, e.min_calls_to_success) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                })
                .or_insert_with(|| e.clone());
        }
        Ok(Self::assemble(self.catalog_fingerprint.clone(), members, operators))
    }

    pub fn max_calls(&self) -> u32 {
        self.members.values().map(|m| m.max_calls).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("aggregates serialize");
        s.push('\n');
        s
    }
}

/// Union over `reports`: an operator passes if it passed in any of them.
pub fn aggregate_runs(reports: &[RunReport]) -> Result<AggregateReport, AggregateError> {
    let (first, rest) = reports.split_first().ok_or(AggregateError::Empty)?;
    let mut agg = AggregateReport::from_run(first);
    for r in rest {
        if r.catalog_fingerprint != agg.catalog_fingerprint {
            return Err(AggregateError::CatalogMismatch {
                expected: agg.catalog_fingerprint.clone(),
                found: r.catalog_fingerprint.clone(),
                run_id: r.run_id.clone(),
            });
        }
        agg = agg.merge(&AggregateReport::from_run(r))?;
    }
    Ok(agg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: OperatorCategory,
    pub operators: usize,
    pub passed: usize,
    /// Percentage, 0 for empty rows.
    pub coverage_pct: f64,
}

/// Anything that lists operators with a category, pass flag and
/// calls-to-success.
pub trait CoverageSource {
    fn entries(&self) -> Vec<(OperatorCategory, bool, Option<u32>)>;
    fn max_calls(&self) -> u32;
}

impl CoverageSource for RunReport {
    fn entries(&self) -> Vec<(OperatorCategory, bool, Option<u32>)> {
        self.operators
            .iter()
            .map(|o| (o.category, o.passed(), o.calls_to_success.filter(|_| o.passed())))
            .collect()
    }

    fn max_calls(&self) -> u32 {
        self.config.max_calls()
    }
}

impl CoverageSource for AggregateReport {
    fn entries(&self) -> Vec<(OperatorCategory, bool, Option<u32>)> {
        self.operators
            .values()
            .map(|e| (e.category, e.passed(), e.min_calls_to_success))
            .collect()
    }

    fn max_calls(&self) -> u32 {
        AggregateReport::max_calls(self)
    }
}

/// One row per category, always seven rows in display order.
pub fn coverage_by_category(source: &dyn CoverageSource) -> Vec<CategoryRow> {
    let entries = source.entries();
    OperatorCategory::ALL
        .iter()
        .map(|&category| {
            let ops = entries.iter().filter(|e| e.0 == category).count();
            let passed = entries.iter().filter(|e| e.0 == category && e.1).count();
            CategoryRow {
                category,
                operators: ops,
                passed,
                coverage_pct: 100.0 * fraction(passed, ops),
            }
        })
        .collect()
}

/// `(x, passes with calls_to_success <= x)` for `x` in `1..=max_calls`.
pub fn cumulative_series(calls_to_success: &[u32], max_calls: u32) -> Vec<(u32, u32)> {
    let mut hist = vec![0u32; max_calls as usize + 1];
    for &c in calls_to_success {
        if (1..=max_calls).contains(&c) {
            hist[c as usize] += 1;
        }
    }
    let mut acc = 0;
    (1..=max_calls)
        .map(|x| {
            acc += hist[x as usize];
            (x, acc)
        })
        .collect()
}

pub fn cumulative_curve(source: &dyn CoverageSource) -> Vec<(u32, u32)> {
    let calls: Vec<u32> = source.entries().into_iter().filter(|e| e.1).filter_map(|e| e.2).collect();
    cumulative_series(&calls, source.max_calls())
}

#[cfg(test)]
mod tests {
    use super::super::report::tests::{record, snapshot};
    use super::*;
    use proptest::prelude::*;

    fn run(id: &str, ops: &[(&str, Option<u32>)]) -> RunReport {
        let recs = ops.iter().map(|(n, c)| record(n, OperatorCategory::Elementwise, *c)).collect();
        RunReport::new(id, "fp", snapshot(), recs, vec![])
    }

    fn passing(agg: &AggregateReport) -> BTreeSet<String> {
        agg.operators.iter().filter(|(_, e)| e.passed()).map(|(k, _)| k.clone()).collect()
    }

    #[test]
    fn union_example() {
        let a = run("A", &[("1", Some(1)), ("2", Some(4)), ("3", None), ("4", None)]);
        let b = run("B", &[("1", None), ("2", Some(2)), ("3", Some(9)), ("4", None)]);
        let agg = aggregate_runs(&[a.clone(), b]).unwrap();
        assert_eq!(passing(&agg), BTreeSet::from(["1".into(), "2".into(), "3".into()]));
        assert_eq!(agg.coverage, 0.75);
        assert_eq!(agg.operators["2"].min_calls_to_success, Some(2));
        assert!(agg.coverage >= agg.members.values().map(|m| m.coverage).fold(0.0, f64::max));

        let single = aggregate_runs(&[a.clone()]).unwrap();
        assert_eq!(single.coverage, a.totals.coverage);
        assert_eq!(passing(&single), a.operators.iter().filter(|o| o.passed()).map(|o| o.operator.clone()).collect());
    }

    /// 100 operators: run A passes 0..55, run B passes 24..64 (40 ops, 31
    /// shared with A). The union is 0..64.
    #[test]
    fn constructed_55_to_64_fixture() {
        let names: Vec<String> = (0..100).map(|i| format!("op{i:03}")).collect();
        let mk = |id: &str, pass: std::ops::Range<usize>| {
            let recs = names
                .iter()
                .enumerate()
                .map(|(i, n)| record(n, OperatorCategory::Other, pass.contains(&i).then_some(1)))
                .collect();
            RunReport::new(id, "fp", snapshot(), recs, vec![])
        };
        let a = mk("A", 0..55);
        let b = mk("B", 24..64);
        assert_eq!(a.totals.coverage, 0.55);
        assert_eq!(b.totals.coverage, 0.40);
        let agg = aggregate_runs(&[a, b]).unwrap();
        assert_eq!(agg.passed, 64);
        assert_eq!(agg.coverage, 0.64);
    }

    #[test]
    fn catalog_mismatch_is_rejected() {
        let a = run("A", &[("1", Some(1))]);
        let mut b = run("B", &[("1", Some(1))]);
        b.catalog_fingerprint = "other".into();
        assert!(matches!(aggregate_runs(&[a, b]), Err(AggregateError::CatalogMismatch { .. })));
        assert_eq!(aggregate_runs(&[]), Err(AggregateError::Empty));
    }

    #[test]
    fn category_table() {
        let empty = RunReport::new("e", "fp", snapshot(), vec![], vec![]);
        let rows = coverage_by_category(&empty);
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.operators == 0 && r.coverage_pct == 0.0));

        let elem = run("x", &[("a", Some(1)), ("b", None)]);
        let rows = coverage_by_category(&elem);
        let nonzero: Vec<_> = rows.iter().filter(|r| r.operators > 0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].category, OperatorCategory::Elementwise);
        assert_eq!(nonzero[0].coverage_pct, 50.0);
    }

    #[test]
    fn curve_examples() {
        assert_eq!(cumulative_series(&[1, 3], 3), vec![(1, 1), (2, 1), (3, 2)]);
        assert!(cumulative_series(&[], 45).iter().all(|&(_, y)| y == 0));
        let r = run("x", &[("a", Some(1)), ("b", Some(3)), ("c", None)]);
        let c = cumulative_curve(&r);
        assert_eq!(c.len(), 45);
        assert_eq!(c[2], (3, 2));
        assert_eq!(c.last(), Some(&(45, 2)));
    }

    fn arb_run(id: &'static str) -> impl Strategy<Value = RunReport> {
        let cats = OperatorCategory::ALL.to_vec();
        // One catalog: an operator's category is a function of its name.
        proptest::collection::vec((0usize..12, proptest::option::of(1u32..=45)), 0..12).prop_map(
            move |ops| {
                let mut seen = BTreeSet::new();
                let recs = ops
                    .into_iter()
                    .filter(|(n, _)| seen.insert(*n))
                    .map(|(n, c)| record(&format!("op{n}"), cats[n % cats.len()], c))
                    .collect();
                RunReport::new(id, "fp", snapshot(), recs, vec![])
            },
        )
    }

    fn norm(a: &AggregateReport) -> String {
        a.to_json()
    }

    proptest! {
        #[test]
        fn merge_is_commutative_associative_idempotent(a in arb_run("A"), b in arb_run("B"), c in arb_run("C")) {
            let (a, b, c) = (AggregateReport::from_run(&a), AggregateReport::from_run(&b), AggregateReport::from_run(&c));
            prop_assert_eq!(norm(&a.merge(&b).unwrap()), norm(&b.merge(&a).unwrap()));
            let left = a.merge(&b).unwrap().merge(&c).unwrap();
            let right = a.merge(&b.merge(&c).unwrap()).unwrap();
            prop_assert_eq!(norm(&left), norm(&right));
            prop_assert_eq!(norm(&a.merge(&a).unwrap()), norm(&a));
        }

        #[test]
        fn union_dominates_members(a in arb_run("A"), b in arb_run("B")) {
            let agg = aggregate_runs(&[a.clone(), b.clone()]).unwrap();
            let union = cumulative_curve(&agg);
            for member in [&a, &b] {
                let m = cumulative_curve(member);
                prop_assert_eq!(m.len(), union.len());
                for (p, q) in m.iter().zip(&union) {
                    prop_assert!(q.1 >= p.1);
                }
                // Same operator universe for both members is not guaranteed,
                // so compare pass counts rather than fractions.
                prop_assert!(agg.passed >= member.totals.passed);
            }
            let rows = coverage_by_category(&agg);
            prop_assert_eq!(rows.iter().map(|r| r.operators).sum::<usize>(), agg.operators_total);
            prop_assert_eq!(rows.iter().map(|r| r.passed).sum::<usize>(), agg.passed);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn curve_is_monotone(calls in proptest::collection::vec(0u32..60, 0..40), max in 1u32..60) {
            let s = cumulative_series(&calls, max);
            prop_assert_eq!(s.len(), max as usize);
            prop_assert!(s.windows(2).all(|w| w[0].1 <= w[1].1 && w[1].0 == w[0].0 + 1));
            // Independent count at the right edge.
            let expect = calls.iter().filter(|&&c| c >= 1 && c <= max).count() as u32;
            prop_assert_eq!(s.last().unwrap().1, expect);
        }
    }
}
