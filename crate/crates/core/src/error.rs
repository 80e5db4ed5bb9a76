use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = IdmError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {context}")]
    NumericFailure {
        context: String,
        /// Last iterate for which the objective was finite, when available.
        last_finite: Option<Vec<f64>>,
    },

    #[error("{what} exceeds capability limit ({got} > {limit})")]
    Capability {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("operation `{op}` is not defined for the {family} family")]
    WrongFamily { op: &'static str, family: &'static str },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("singular Fisher information (minimum eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("{failed} of {total} replicate fits failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{context}: {source}")]
    Fit {
        context: String,
        #[source]
        source: Box<IdmError>,
    },
}

impl IdmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        IdmError::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        IdmError::NumericFailure {
            context: msg.into(),
            last_finite: None,
        }
    }

    pub(crate) fn within(self, context: impl Into<String>) -> Self {
        IdmError::Fit {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
