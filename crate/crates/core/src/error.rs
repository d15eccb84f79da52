use thiserror::Error;

/// Errors raised by the numerical kernels and the batch runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("ellipticity failure: {0}")]
    Ellipticity(String),

    #[error("insufficient sampling: {0}")]
    Sampling(String),

    #[error("time step outside stability envelope: {0}")]
    Stability(String),

    #[error("non-finite state at t = {t}: {what}")]
    NonFinite { t: f64, what: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 for rejected input, 2 for a run that failed midway.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::GridMismatch(_)
            | Error::Geometry(_)
            | Error::Stability(_)
            | Error::Config(_) => 1,
            Error::Solver { .. }
            | Error::Ellipticity(_)
            | Error::Sampling(_)
            | Error::NonFinite { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
        }
    }
}
