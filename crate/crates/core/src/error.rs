use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("root finder failed to converge after {iterations} iterations (last bracket [{lo}, {hi}])")]
    RootFinding { iterations: usize, lo: f64, hi: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last Rayleigh quotient {rayleigh})")]
    PowerIteration { iterations: usize, rayleigh: f64 },

    #[error("constraint matrix is rank deficient (pivot {pivot} of {rows} rows is {value:e})")]
    RankDeficient { pivot: usize, rows: usize, value: f64 },

    #[error("KKT factorization failed: zero pivot at position {index}")]
    SingularKkt { index: usize },

    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
