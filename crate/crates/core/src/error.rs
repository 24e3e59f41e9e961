use thiserror::Error;

use crate::numeric::quad::QuadError;
use crate::numeric::roots::RootError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unsupported regime: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error("horizon {horizon} too short: tail bound {tail:e} exceeds {limit:e}")]
    Horizon { horizon: f64, tail: f64, limit: f64 },
    #[error("no epsilon-Nash profile found; smallest maximal deviation gain {gain:e}")]
    NoEquilibrium { gain: f64 },
    #[error("profit threshold: gain changes sign {count} times on the scan grid")]
    ThresholdNotUnique { count: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
