use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem constants: {0}")]
    InvalidConstants(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("schedule is degenerate at k = {k}: Gamma_k = 0")]
    ScheduleDegenerate { k: usize },

    #[error("index {k} is outside the schedule horizon {horizon}")]
    OutOfHorizon { k: usize, horizon: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver diverged at iteration {k}: {reason}")]
    Divergence { k: usize, reason: String },

    #[error("closed loop is not stable (spectral radius {radius})")]
    Unstable { radius: f64 },

    #[error("projection did not converge after {sweeps} sweeps (last change {residual:e})")]
    ProjectionNotConverged { sweeps: usize, residual: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Re-tag an oracle or prox failure as a divergence at iteration `k`.
    pub(crate) fn at_iteration(self, k: usize) -> Error {
        match self {
            Error::Divergence { .. } => self,
            Error::Unstable { radius } => Error::Divergence {
                k,
                reason: format!("closed loop unstable (spectral radius {radius})"),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
