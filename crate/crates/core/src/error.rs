//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("truncation breach: population {pop:.3e} in the top {levels} resonator levels at t = {t_ns} ns")]
    TruncationBreach { pop: f64, levels: usize, t_ns: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate eigenvalues within a strip: |{0:.3e}| below tolerance")]
    DegenerateStrip(f64),

    #[error("index out of range: {0}")]
    IndexRange(String),

    #[error("model invalid: {0}")]
    ModelInvalid(String),

    #[error("insufficient oscillations: {0}")]
    InsufficientOscillations(String),

    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("config error: {0}")]
    Config(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
