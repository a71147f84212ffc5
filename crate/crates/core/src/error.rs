use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("site {site:?} is outside the disorder region")]
    SiteOutsideRegion { site: Vec<i64> },
    #[error("energy {energy} is numerically in the spectrum (distance {distance:e})")]
    Resonant { energy: f64, distance: f64 },
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("box is not partially interactive")]
    NotPartiallyInteractive,
    #[error("interaction does not vanish across the split: {0}")]
    InconsistentRange(String),
    #[error("rectangles are not partially separated")]
    NotSeparated,
    #[error("memory budget exceeded: {0}")]
    Budget(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
