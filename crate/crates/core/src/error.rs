use thiserror::Error;

use crate::decoy::LpStatus;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("bandwidth {bandwidth_ghz} GHz is below the transform limit {limit_ghz} GHz")]
    SubTransformLimit { bandwidth_ghz: f64, limit_ghz: f64 },

    #[error("incomplete dataset: {0}")]
    IncompleteData(String),

    #[error("invalid record {record}: {reason}")]
    InvalidRecord { record: String, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("linear program ({stage}) finished with status {status:?}")]
    Lp { stage: &'static str, status: LpStatus },

    #[error("single-photon yield lower bound is zero; the error-rate bound is undefined")]
    ZeroYieldBound,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
