use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("{what} did not converge")]
    NoConvergence { what: &'static str },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degree {needed} exceeds available degree {available}")]
    DegreeExceeded { needed: usize, available: usize },
    #[error("bad weights: {0}")]
    BadWeights(String),
    #[error("reweighting polynomial is not a sum of squares")]
    NotSos,
    #[error("reweighting annihilates the pseudo-distribution (weight {weight:e})")]
    DegenerateWeight { weight: f64 },
    #[error("degree budget exhausted: need {needed}, have {available}")]
    DegreeExhausted { needed: usize, available: usize },
    #[error("ill-formed input: {0}")]
    IllFormed(String),
    #[error("degree {0} too small (need an even degree of at least 4)")]
    DegreeTooSmall(usize),
    #[error("solver hit its iteration limit after {iterations} iterations")]
    SolverIterLimit { iterations: usize },
    #[error("no acceptable direction after {tries} samples")]
    RetryExhausted { tries: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("iteration limit {limit} reached without meeting the stopping condition")]
    IterLimit { limit: usize },
    #[error("no eigenvalue clears the threshold")]
    EmptySubspace,
    #[error("candidate is zero")]
    ZeroCandidate,
    #[error("thresholding emptied the index set")]
    Emptied,
    #[error("round limit {limit} reached")]
    MaxRounds { limit: usize },
    #[error("empty index set")]
    EmptySet,
    #[error("bad dimensions: {0}")]
    BadDims(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("contract check failed: {0}")]
    ContractViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
