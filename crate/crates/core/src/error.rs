use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema: {0}")]
    Schema(String),

    #[error("row {row}, column `{column}`: {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normal equations are singular (rank deficient design); increase the ridge penalty")]
    RankDeficient,

    #[error("response must be binary (0/1) for the logistic family; found {0}")]
    NonBinaryResponse(f64),

    #[error("AUC needs both classes among the labels")]
    SingleClass,

    #[error("treatment arm `{0}` is empty or has zero weight")]
    EmptyArm(&'static str),

    #[error("TMLE fluctuation did not converge (epsilon = {epsilon}); propensity weights are likely extreme, tighten truncation")]
    FluctuationDiverged { epsilon: f64 },

    #[error("bound violated: {0}")]
    BoundViolated(String),

    #[error("external source has {available} rows but {required} are needed")]
    MissingRows { available: usize, required: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient | Error::FluctuationDiverged { .. } | Error::EmptyArm(_) | Error::BoundViolated(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
