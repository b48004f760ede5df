use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("metric at vertex {vertex} is not symmetric positive definite")]
    NotPositiveDefinite { vertex: usize },
    #[error("gauge matrix at vertex {vertex} is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularGauge { vertex: usize, condition: f64 },
    #[error("path is not consecutive at step {step}")]
    BrokenPath { step: usize },
    #[error("rank mismatch: {0}")]
    RankMismatch(String),
    #[error("degree {degree} out of range for this operation (grid dimension {dim})")]
    DegreeOutOfRange { degree: usize, dim: usize },
    #[error("cochain does not match grid/bundle: {0}")]
    Mismatch(String),
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("skew part is singular at vertex {vertex}")]
    SingularSkewPart { vertex: usize },
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
