use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("stability index alpha = {0} outside (0, 2]")]
    InvalidAlpha(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("centering condition violated for alpha = 1: |odd moment| = {0:e}")]
    Centering(f64),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("calibration of the symbol constant failed for alpha = {alpha}: relative error {rel_err:e}")]
    Calibration { alpha: f64, rel_err: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field does not live on this grid")]
    GridMismatch,
    #[error("time ordering violated: {0}")]
    TimeOrder(String),
    #[error("insufficient grid resolution ({reason}); suggested n = {n}, L = {half_width}")]
    Resolution {
        reason: String,
        n: usize,
        half_width: f64,
    },
    #[error("level {level} out of range (built up to {max})")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("invalid moment order p = {0}")]
    InvalidMoment(f64),
    #[error("invalid mark space: {0}")]
    InvalidMarkSpace(String),
    #[error("small-jump cutoff too large: {0}")]
    Cutoff(String),
    #[error("time quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("model assumptions not satisfied: {0}")]
    Assumption(String),
    #[error("invalid observation model: {0}")]
    InvalidObservation(String),
    #[error("invalid input data: {0}")]
    InvalidInput(String),
    #[error("particle weights degenerate (effective sample size {0:.2})")]
    Degenerate(f64),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
