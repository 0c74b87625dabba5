use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh needs at least one subdivision per side")]
    EmptyMesh,

    #[error("cell {0} is degenerate (zero area)")]
    DegenerateCell(usize),

    #[error("no {kind} quadrature rule of degree {degree} (supported: 1..={max})")]
    UnsupportedQuadrature {
        kind: &'static str,
        degree: usize,
        max: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("{solver} did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{solver} broke down at iteration {iteration}")]
    Breakdown {
        solver: &'static str,
        iteration: usize,
    },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
