use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("alphabet mismatch: {0}")]
    Alphabet(String),
    #[error("invalid matrix system: {0}")]
    InvalidSystem(String),
    #[error("degenerate system: every H_ba is zero")]
    Degenerate,
    #[error("B not positive definite (min eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("eigenvalue 1 of the transfer operator is not simple ({0} eigenvalues near 1)")]
    NotSimple(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
