use thiserror::Error;

/// Errors raised by the allocation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid formation size: need at least 2 spacecraft, got {0}")]
    InvalidFormationSize(usize),

    #[error("invalid dimension {0}: expected 1, 2 or 3")]
    InvalidDimension(usize),

    #[error("singular geometry: spacecraft {i} and {j} are {distance:.3e} m apart")]
    SingularGeometry { i: usize, j: usize, distance: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("percent error is undefined for a zero force command")]
    ZeroCommand,

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
