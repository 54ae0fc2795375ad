use thiserror::Error;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration supplied by the caller.
    Usage,
    /// Model definition or parameter outside the model's domain.
    Model,
    /// Numerical failure during evaluation (underflow, zero mass, singular solve).
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("multi-index table for q = {q}, r = {r} has more than usize::MAX entries")]
    TableOverflow { q: usize, r: usize },

    #[error("multi-index {mu:?} is not dominated by {nu:?}")]
    NotDominated { nu: Vec<u32>, mu: Vec<u32> },

    #[error("multi-index {0:?} is not in the table")]
    UnknownIndex(Vec<u32>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "parameter {coord} ({name}) = {value} is outside the admissible interval ({lower}, {upper})"
    )]
    Inadmissible {
        coord: usize,
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("derivative order {requested} exceeds the model's maximum order {max}")]
    OrderTooHigh { requested: usize, max: usize },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("model domain error: {0}")]
    Domain(String),

    #[error("stationary law is not well defined: {0}")]
    Reducible(String),

    #[error("zero likelihood mass at step {step}")]
    ZeroMass { step: usize },

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },

    #[error("unscaled product underflowed at step {step}")]
    Underflow { step: usize },

    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_)
            | Error::TableOverflow { .. }
            | Error::NotDominated { .. }
            | Error::UnknownIndex(_)
            | Error::DimensionMismatch(_)
            | Error::OracleLimit(_) => ErrorKind::Usage,
            Error::Inadmissible { .. }
            | Error::OrderTooHigh { .. }
            | Error::InvalidSpec(_)
            | Error::Domain(_)
            | Error::Reducible(_) => ErrorKind::Model,
            Error::ZeroMass { .. }
            | Error::NonFinite { .. }
            | Error::Underflow { .. } => ErrorKind::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
