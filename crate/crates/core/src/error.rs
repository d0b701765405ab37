use thiserror::Error;

/// Errors produced anywhere in the solver.
#[derive(Debug, Error)]
pub enum EvdError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {deviation:e} exceeds {limit:e}")]
    NotSymmetric { deviation: f64, limit: f64 },

    #[error("tridiagonal QR did not converge after {iterations} iterations ({unconverged} eigenvalues pending)")]
    NoConvergence { iterations: usize, unconverged: usize },

    #[error("Jacobi oracle did not converge after {sweeps} sweeps (off-diagonal mass {off:e})")]
    OracleNoConvergence { sweeps: usize, off: f64 },

    #[error("infeasible back-transform plan: {0}")]
    InfeasiblePlan(String),

    #[error("protocol violation on worker {worker} during {stage}: {detail}")]
    Protocol { worker: usize, stage: &'static str, detail: String },

    #[error("worker {worker} failed during {stage}: {detail}")]
    Worker { worker: usize, stage: &'static str, detail: String },

    #[error("dependency cycle in schedule: {0}")]
    Cycle(String),

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EvdError>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(EvdError::Shape { op, detail: detail.into() })
}
