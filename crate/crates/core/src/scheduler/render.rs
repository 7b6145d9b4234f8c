//! Text, CSV and JSON renderings of reports.

use std::fmt::Write as _;
use std::path::Path;

use super::aggregate::{coverage_by_category, cumulative_curve, AggregateReport, CategoryRow, CoverageSource};
use super::report::{write_atomic, RunReport, Timings};

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn category_csv(rows: &[CategoryRow]) -> Vec<u8> {
    csv_bytes(
        &["category", "operators", "passed", "coverage_pct"],
        rows.iter().map(|r| {
            vec![
                r.category.label().to_string(),
                r.operators.to_string(),
                r.passed.to_string(),
                format!("{:.1}", r.coverage_pct),
            ]
        }),
    )
}

pub fn curve_csv(series: &[(u32, u32)]) -> Vec<u8> {
    csv_bytes(
        &["llm_calls", "cumulative_passes"],
        series.iter().map(|(x, y)| vec![x.to_string(), y.to_string()]),
    )
}

pub fn operators_csv(report: &RunReport) -> Vec<u8> {
    csv_bytes(
        &["operator", "category", "status", "llm_calls_used", "calls_to_success", "attempts", "failure_stage", "infrastructure_failure"],
        report.operators.iter().map(|o| {
            vec![
                o.operator.clone(),
                o.category.label().to_string(),
                if o.passed() { "pass" } else { "fail" }.to_string(),
                o.llm_calls_used.to_string(),
                o.calls_to_success.map(|c| c.to_string()).unwrap_or_default(),
                o.attempts.len().to_string(),
                o.failure_stage.map(|s| s.as_str().to_string()).unwrap_or_default(),
                o.infrastructure_failure.to_string(),
            ]
        }),
    )
}

fn category_table(out: &mut String, rows: &[CategoryRow]) {
    let _ = writeln!(out, "{:<22} {:>9} {:>9}", "Category", "Operators", "Coverage");
    for r in rows {
        let _ = writeln!(out, "{:<22} {:>9} {:>8.1}%", r.category.label(), r.operators, r.coverage_pct);
    }
}

pub fn summary_text(report: &RunReport) -> String {
    let t = &report.totals;
    let mut out = String::new();
    let _ = writeln!(out, "Run {} ({})", report.run_id, report.config.mode);
    let _ = writeln!(
        out,
        "Passed {}/{} operators ({:.1}% coverage), {} LLM calls, {} infrastructure failure(s)",
        t.passed,
        t.operators,
        100.0 * t.coverage,
        t.llm_calls_total,
        t.infrastructure_failures
    );
    let _ = writeln!(
        out,
        "linter: {}, summarization: {}, model: {}",
        on_off(report.config.linter_enabled),
        on_off(report.config.summarization_enabled),
        report.config.generation_model
    );
    if report.incomplete {
        let _ = writeln!(out, "INCOMPLETE: {} operator(s) not run", report.not_run.len());
    }
    out.push('\n');
    category_table(&mut out, &coverage_by_category(report));
    let failures: Vec<_> = report.operators.iter().filter(|o| !o.passed()).collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\nFailures:");
        for o in failures {
            let stage = o.failure_stage.map(|s| s.as_str()).unwrap_or("unknown");
            let infra = if o.infrastructure_failure { " [infrastructure]" } else { "" };
            let _ = writeln!(out, "  {:<32} {stage}{infra}", o.operator);
        }
    }
    out
}

pub fn aggregate_text(agg: &AggregateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Aggregate of {} run(s)", agg.members.len());
    for (id, m) in &agg.members {
        let _ = writeln!(out, "  {id:<24} {:>5}/{:<5} {:>6.1}%", m.passed, m.operators, 100.0 * m.coverage);
    }
    let _ = writeln!(
        out,
        "Union: {}/{} operators ({:.1}% coverage)\n",
        agg.passed,
        agg.operators_total,
        100.0 * agg.coverage
    );
    category_table(&mut out, &coverage_by_category(agg));
    out
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Writes report.json (atomically), timings.json and the derived tables.
pub fn write_run_outputs(dir: &Path, report: &RunReport, timings: &Timings) -> anyhow::Result<()> {
    write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?;
    let mut t = serde_json::to_string_pretty(timings)?;
    t.push('\n');
    write_atomic(&dir.join("timings.json"), t.as_bytes())?;
    write_tables(dir, report)?;
    write_atomic(&dir.join("summary.txt"), summary_text(report).as_bytes())?;
    Ok(())
}

/// Category and curve CSVs for any report-like source, plus the per-operator
/// table for run reports.
pub fn write_tables(dir: &Path, report: &RunReport) -> anyhow::Result<()> {
    write_source_tables(dir, report)?;
    write_atomic(&dir.join("operators.csv"), &operators_csv(report))?;
    Ok(())
}

pub fn write_source_tables(dir: &Path, source: &dyn CoverageSource) -> anyhow::Result<()> {
    write_atomic(&dir.join("coverage_by_category.csv"), &category_csv(&coverage_by_category(source)))?;
    write_atomic(&dir.join("curve.csv"), &curve_csv(&cumulative_curve(source)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::report::tests::{record, snapshot};
    use super::*;
    use crate::catalog::OperatorCategory;

    #[test]
    fn renders_tables() {
        let r = RunReport::new(
            "r1",
            "fp",
            snapshot(),
            vec![
                record("a", OperatorCategory::Elementwise, Some(1)),
                record("b, c", OperatorCategory::Reduction, None),
            ],
            vec![],
        );
        let ops = String::from_utf8(operators_csv(&r)).unwrap();
        assert!(ops.contains("\"b, c\",Reduction,fail,45,,0,lint,false"));
        let cats = String::from_utf8(category_csv(&coverage_by_category(&r))).unwrap();
        assert_eq!(cats.lines().count(), 8);
        assert!(cats.contains("Elementwise,1,1,100.0"));
        let text = summary_text(&r);
        assert!(text.contains("Passed 1/2 operators (50.0% coverage)"));
        assert!(text.contains("b, c"));
        assert_eq!(String::from_utf8(curve_csv(&[(1, 1), (2, 1)])).unwrap(), "llm_calls,cumulative_passes\n1,1\n2,1\n");
    }
}
