use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("matrix is indefinite: eigenvalue {eigenvalue:e} < -1e-12")]
    Indefinite { eigenvalue: f64 },
    #[error("covariance is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid carrier: {0}")]
    Carrier(String),
    #[error("density sup unavailable: provide an explicit upper bound for the carrier density")]
    MissingDensityBound,
    #[error("point outside carrier box: {0:?}")]
    OutOfBox(Vec<f64>),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
