use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument value is out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix or vector shapes do not conform.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input data failed validation (parse errors, ragged rows, NaN entries).
    #[error("data error: {0}")]
    Data(String),

    /// A quantity that must be nonzero degenerated to zero.
    #[error("degenerate value: {0}")]
    Degenerate(String),

    /// An evaluation was requested outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A solver produced a NaN or infinity; reports the failing iteration.
    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
