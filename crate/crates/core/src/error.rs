use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("column {0} has zero standard deviation")]
    DegenerateColumn(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient degrees of freedom: the two clusters hold {m} points, need at least 3")]
    InsufficientDegreesOfFreedom { m: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("truncation set has zero probability mass")]
    EmptyTruncation,

    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    #[error("importance sampling failed: {0}")]
    EstimationFailure(String),

    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("power is undefined: no trial has a false null")]
    UndefinedPower,
}

impl Error {
    /// True for failures caused by the data or the sampler rather than by
    /// the caller's configuration.
    pub fn is_statistical(&self) -> bool {
        matches!(
            self,
            Error::InsufficientDegreesOfFreedom { .. }
                | Error::DegenerateData(_)
                | Error::EmptyTruncation
                | Error::InternalConsistency(_)
                | Error::EstimationFailure(_)
                | Error::Numeric(_)
                | Error::DegenerateColumn(_)
        )
    }
}
