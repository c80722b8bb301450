use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unphysical state: {0}")]
    UnphysicalState(String),

    #[error("pump power {pump_mw} mW is not below threshold {p_th_mw} mW")]
    AboveThreshold { pump_mw: f64, p_th_mw: f64 },

    #[error("unsupported state: {0}")]
    UnsupportedState(String),

    #[error("infeasible target {target}: reachable values end at {limit}")]
    InfeasibleTarget { target: f64, limit: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
