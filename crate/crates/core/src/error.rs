use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid exponent r = {0} (need r >= 1)")]
    InvalidExponent(f64),

    #[error("assumption {hypothesis} violated: {detail}")]
    AssumptionViolation {
        hypothesis: &'static str,
        detail: String,
    },

    #[error("invalid Kirchhoff family: {0}")]
    InvalidFamily(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("the Nehari functional is undefined at the origin")]
    UndefinedOnOrigin,

    #[error("fiber parameter must be positive, got t = {0}")]
    NonPositiveFiberParameter(f64),

    #[error("Nehari projection failed: {0}")]
    ProjectionFailure(String),

    #[error("unsupported check: {0}")]
    Unsupported(String),

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
