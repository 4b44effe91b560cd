//! Monte Carlo scenarios, the replication loop and result tables.

pub mod report;
pub mod scenario;
pub mod study;

pub use report::{emit, emit_diagnostics, emit_rows, parse_csv, DiagnosticRow, Format, TableRow};
pub use scenario::{generate, ObservationProbit, Scenario, ScenarioSpec};
pub use study::{
    covariance_with_se, ks_two_sample, run_replication, run_study, summarize, CellDraw, CellSummary, MethodSummary,
    RepOutcome, StudyConfig, StudyReport,
};
