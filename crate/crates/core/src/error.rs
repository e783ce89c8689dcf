use thiserror::Error;

/// Errors raised by the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported regime: {0}")]
    Regime(String),

    #[error("circulant embedding is not nonnegative definite (most negative eigenvalue {min_eigenvalue:e})")]
    Embedding { min_eigenvalue: f64 },

    #[error("covariance matrix is not positive definite at row {0}")]
    NotPositiveDefinite(usize),

    #[error("integration diverged at step {step} (t = {t}): {reason}")]
    Divergence { step: usize, t: f64, reason: String },

    #[error("singular Gram matrix: det {det:e} below threshold {threshold:e} (the ergodic limit E[(f^tr f)(X)] must be invertible)")]
    SingularGram { det: f64, threshold: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
