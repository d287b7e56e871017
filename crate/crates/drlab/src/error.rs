//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state validation failed: {0}")]
    InvalidState(String),

    #[error("channel validation failed: {0}")]
    InvalidChannel(String),

    #[error("zero-probability branch: {0}")]
    ZeroProbability(String),

    #[error("zero trace after projection: {0}")]
    ZeroTrace(String),

    #[error("dimension overflow: {0}")]
    Overflow(String),

    #[error(
        "drive detuning {detuning_mhz} MHz is within {tol_mhz} MHz of the pole at {pole_mhz} MHz"
    )]
    StarkPole {
        detuning_mhz: f64,
        pole_mhz: f64,
        tol_mhz: f64,
    },

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
