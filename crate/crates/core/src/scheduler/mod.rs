//! Campaign scheduling and reporting: parallel dispatch with fault
//! isolation, run reports and their recovery, multi-run aggregation, the
//! artifact store and report rendering.

mod aggregate;
mod artifacts;
mod config;
mod dispatch;
mod render;
mod report;

pub use aggregate::{
    aggregate_runs, coverage_by_category, cumulative_curve, cumulative_series, AggregateEntry, AggregateError,
    AggregateReport, CategoryRow, CoverageSource, MemberSummary,
};
pub use artifacts::{sha256_hex, ArtifactMeta, ArtifactStore, StoredArtifact};
pub use config::{load_captured, LlmConfig, ModelChoice, RunConfig, Runtime, WorkersConfig};
pub use dispatch::{
    dispatch, dispatch_run, execute_jobs, replay_artifact, report_path, Campaign, DispatchOutput, ExecStats, Mode,
    ReplayResult,
};
pub use render::{
    aggregate_text, category_csv, curve_csv, operators_csv, summary_text, write_run_outputs, write_source_tables,
    write_tables,
};
pub use report::{
    recover_report, write_atomic, ConfigSnapshot, OperatorRecord, RecordLine, RecordSink, RunReport, Timings, Totals,
    REPORT_SCHEMA_VERSION,
};
