use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point {x} lies outside the design space [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("incompatible bases: {0}")]
    IncompatibleBases(String),

    #[error("moment matrix is numerically singular (condition number {cond:.3e})")]
    SingularMoment { cond: f64 },

    #[error("kernel is singular on the diagonal and the policy forbids smoothing; \
             smoothing required for {context}")]
    SmoothingRequired { context: &'static str },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureDiverged(String),

    #[error("root bracketing failed on [{lo}, {hi}]: {reason}")]
    BracketingFailed { lo: f64, hi: f64, reason: String },

    #[error("multiplicative step rejected: {0}")]
    StepRejected(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
