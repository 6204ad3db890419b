use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid polynomial degree {degree}: {reason}")]
    InvalidDegree { degree: usize, reason: &'static str },
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),
    #[error("point {x} lies outside [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },
    #[error("fields or operators live on different spaces")]
    SpaceMismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid soliton parameters: {0}")]
    InvalidSoliton(String),
    #[error("invalid rate input: {0}")]
    InvalidRateInput(String),
    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("step {step} (t = {time}) failed: {source}")]
    StepFailed {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    PowerIteration { estimate: f64, iterations: usize },
    #[error("step too large: tau*||L|| = {value} exceeds the guard {limit}")]
    CflGuard { value: f64, limit: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv(_) => 4,
            Error::NewtonDiverged { .. }
            | Error::SingularJacobian
            | Error::NonFinite(_)
            | Error::Eigen(_)
            | Error::PowerIteration { .. } => 3,
            Error::StepFailed { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
