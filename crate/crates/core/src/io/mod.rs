//! CSV ingestion, the flat configuration format, and the applied-analysis
//! workflow.

pub mod analysis;
pub mod config;
pub mod synthetic;
pub mod table;

pub use analysis::{analyze, impute_to_dir, manifest_path, write_report, AnalysisReport, AnalysisRow, Manifest};
pub use config::{parse_estimators, AnalysisConfig, EstimatorName, FlatConfig, MatchVariable};
pub use synthetic::{survey_like, survey_roles, SurveyMissingness, SURVEY_N};
pub use table::{load_csv, read_csv, save_csv, write_complete_csv, write_csv, ColumnRoles};
