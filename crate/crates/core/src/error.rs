use thiserror::Error;

/// Errors raised across the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("compute time zero in slot {slot} with {bits} bits scheduled")]
    ComputeTimeZero { slot: usize, bits: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("conic backend failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True when the error reports an infeasible problem rather than a bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
