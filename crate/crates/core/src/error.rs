use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("probit fit did not converge after {iterations} iterations (score sup-norm trace: {trace:?})")]
    ProbitNonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("insufficient matches: arm {arm} has {available} units, need {required}")]
    InsufficientMatches {
        arm: u8,
        available: usize,
        required: usize,
    },

    #[error("boundary estimate: {0}")]
    BoundaryEstimate(String),

    #[error("matrix not positive-definite in {context}{}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    NotPositiveDefinite {
        context: String,
        iteration: Option<usize>,
    },

    #[error("divergent chain at iteration {iteration}: |{parameter}| = {value:e}")]
    DivergentChain {
        iteration: usize,
        parameter: String,
        value: f64,
    },

    #[error("information not positive-definite (eigenvalues: {eigenvalues:?})")]
    InformationNotPositiveDefinite { eigenvalues: Vec<f64> },

    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("study failed: {failed} of {total} replications errored")]
    StudyFailed { failed: usize, total: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::Config(_) | Error::InvalidLevel(_) => ErrorClass::Usage,
            Error::InvalidData(_) | Error::Parse { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
                ErrorClass::Data
            }
            Error::InsufficientMatches { .. } => ErrorClass::Data,
            Error::SingularDesign(_)
            | Error::ProbitNonConvergence { .. }
            | Error::BoundaryEstimate(_)
            | Error::NotPositiveDefinite { .. }
            | Error::DivergentChain { .. }
            | Error::InformationNotPositiveDefinite { .. }
            | Error::StudyFailed { .. } => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
