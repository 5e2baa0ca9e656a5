use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alpha out of range: {0} (must lie in (0,1))")]
    AlphaOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("requested {requested} eigenpairs but the operator has only {available}")]
    TooManyEigenpairs { requested: usize, available: usize },

    #[error("{what} did not converge (index {index})")]
    NonConvergence { what: &'static str, index: usize },

    #[error("failed to bracket Bessel zero number {k}")]
    BracketFailed { k: usize },

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("overflow risk: {0}")]
    Overflow(String),

    #[error("positivity of the eta middle branch could not be achieved")]
    PositivityUnachievable,

    #[error("density sequence search failed: {0}")]
    DensitySearchFailed(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("high precision arithmetic failed: {0}")]
    Precision(String),
}
