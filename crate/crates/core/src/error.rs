use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter violates its documented range. The message always
    /// starts with the field name.
    #[error("{message}")]
    ParameterOutOfRange {
        field: &'static str,
        message: String,
    },

    #[error("x = {x} lies outside [0, 1]")]
    OutOfInterval { x: f64 },

    #[error("kernel moment of order {j} is not supported (expected 0, 1 or 2)")]
    UnsupportedMoment { j: u32 },

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid forcing: {0}")]
    InvalidForcing(String),

    #[error("system matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("eigeniteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn out_of_range(field: &'static str, message: impl Into<String>) -> Self {
        Error::ParameterOutOfRange {
            field,
            message: message.into(),
        }
    }

    /// Name of the offending field for range errors.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::ParameterOutOfRange { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
