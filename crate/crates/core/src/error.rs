use thiserror::Error;

/// Failures of the symbolic engine.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MathError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
    #[error("expressions belong to incompatible towers")]
    TowerMismatch,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("pole at evaluation point")]
    Pole,
    #[error("invalid radical base at evaluation point")]
    InvalidRadical,
    #[error("metric is not homogeneous of degree 2 in y")]
    Inhomogeneous,
    #[error("metric is degenerate (det g vanishes identically)")]
    Degenerate,
    #[error("tensor error: {0}")]
    Tensor(String),
}

pub type MathResult<T> = Result<T, MathError>;
