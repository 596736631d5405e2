use thiserror::Error;

/// Errors produced anywhere in the fitting and selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("point ({x}, {y}) lies outside the window")]
    OutOfWindow { x: f64, y: f64 },
    #[error("covariate `{0}` is constant on its grid")]
    DegenerateCovariate(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point pattern is empty or too small for this operation")]
    EmptyPattern,
    #[error("sensitivity matrix is singular (eigenvalue ratio {ratio:.3e})")]
    SingularSensitivity { ratio: f64 },
    #[error("intensity {value} exceeds the thinning bound {bound}")]
    BoundViolation { value: f64, bound: f64 },
    #[error("minimum contrast optimisation failed: {0}")]
    OptimFailure(String),
    #[error("evidence quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("too many covariates for exhaustive enumeration: {0} (max 20)")]
    TooManyCovariates(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
