use thiserror::Error;

/// Errors raised by fitting, testing and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("non-binary value {value} at row {row}, binary column {column}")]
    NonBinary {
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("enumeration limit exceeded: q = {q} exceeds cap {cap}")]
    EnumerationLimit { q: usize, cap: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("binary column {column} is constant or perfectly separated")]
    Separation { column: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures caused by malformed input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DegenerateResponse(_)
                | Error::NonBinary { .. }
                | Error::EnumerationLimit { .. }
                | Error::Dimension(_)
                | Error::Invalid(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
