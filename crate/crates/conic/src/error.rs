use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown variable in {0}")]
    UnknownVariable(String),
    #[error("non-finite data in {0}")]
    NonFinite(String),
    #[error("coefficient is not Hermitian in {0}")]
    NonHermitian(String),
    #[error("problem has no constraints or variables")]
    Empty,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("malformed problem dump at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
