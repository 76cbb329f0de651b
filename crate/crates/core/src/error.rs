use thiserror::Error;

/// Errors raised while validating specs or evaluating posterior functionals.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TweedieError {
    #[error("{family}: parameter `{parameter}` out of range, needs {bound}")]
    ParamOutOfRange {
        family: &'static str,
        parameter: &'static str,
        bound: &'static str,
    },

    #[error("moment generating function argument ‖t‖∞ = {t_max} must be below 1/b = {limit}")]
    MgfDomain { t_max: f64, limit: f64 },

    #[error("{target} is not available under {family} noise")]
    Unsupported { family: String, target: String },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("quadrature did not converge: error estimate {error_estimate:e} above tolerance {tolerance:e} after {evaluations} evaluations")]
    NonConvergence {
        error_estimate: f64,
        tolerance: f64,
        evaluations: usize,
    },

    #[error("observed density {density:e} at the evaluation point is too small for the ratio")]
    DensityTooSmall { density: f64 },

    #[error("at least {min} samples are required, got {n}")]
    TooFewSamples { n: usize, min: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("conditioning value has zero probability under the joint law")]
    NoMass,

    #[error("Hermite series partial sums are not Cauchy: tail term magnitude {tail:e}")]
    SeriesDivergence { tail: f64 },
}

pub type Result<T> = std::result::Result<T, TweedieError>;
