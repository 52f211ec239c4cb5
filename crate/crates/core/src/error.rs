use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("rank-one update leaves the positive definite cone (denominator {denominator:e})")]
    SingularUpdate { denominator: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("degenerate covariance: eigenvalue {min_eigenvalue:e} below {threshold:e}")]
    DegenerateCovariance { min_eigenvalue: f64, threshold: f64 },

    #[error("no invertible configuration after {attempts} draws; the measure is concentrated on a hyperplane")]
    DomainUnreachable { attempts: usize },

    #[error("fourth-moment form vanishes in direction {direction:?}; the limiting density is not integrable")]
    NonIntegrable { direction: Vec<f64> },

    #[error("rejection sampler acceptance rate {rate:e} is below 1e-4; reduce the truncation half-width")]
    LowAcceptance { rate: f64 },

    #[error("point is outside the closed domain of admissible (x, M) pairs")]
    OutsideDomain,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
