use thiserror::Error;

/// Errors raised by the numerical kernels.
///
/// Variants map one-to-one onto the failure modes that callers are expected
/// to handle differently: bad inputs, under-resolved grids, iterations that
/// refuse to contract, and quantities that fall outside the regime in which a
/// formula is meaningful.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular point: {0}")]
    Singular(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("hierarchy ordering violated: {0}")]
    Ordering(String),

    #[error("fixed-point iteration failed to contract: {0}")]
    Convergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("accuracy target missed: {0}")]
    Accuracy(String),

    #[error("not in bubble regime: {0}")]
    NotInBubbleRegime(String),

    #[error("stability violation: {0}")]
    Stability(String),

    #[error("invalid data: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
