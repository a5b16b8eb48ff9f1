use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain specification: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("positivity violated at interior point {index}: value {value:e}")]
    PositivityViolation { index: usize, value: f64 },

    #[error("numerical consistency check failed: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("{n} interior points exceed the dense Green matrix cap of {cap}")]
    CapacityExceeded { n: usize, cap: usize },

    #[error("decomposition invariant `{invariant}` violated at point {index}: {detail}")]
    Decomposition {
        invariant: &'static str,
        index: usize,
        detail: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
