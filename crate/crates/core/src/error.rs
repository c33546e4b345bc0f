use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositive(String),
    #[error("matrix is not {kind} (asymmetry {defect:e})")]
    Structure { kind: &'static str, defect: f64 },
    #[error("ill-conditioned matrix (condition number {0:e})")]
    IllConditioned(f64),
    #[error("invalid field specification: {0}")]
    Field(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("linear solver failure: {0}")]
    Solver(String),
    #[error("inconsistent quadratic fit (residual {0:e}); refine the mesh")]
    Fit(f64),
    #[error("missing data: {0}")]
    Missing(String),
    #[error("fit declined: {0}")]
    Declined(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
