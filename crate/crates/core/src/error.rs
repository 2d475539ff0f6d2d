use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid lower factor: {0}")]
    InvalidFactor(String),

    #[error("invalid bandwidth {d} for p = {p}")]
    InvalidBandwidth { p: usize, d: usize },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),

    #[error("not a permutation of 0..{0}")]
    InvalidPermutation(usize),

    #[error("sparsity pattern is not chordal")]
    NonChordalPattern,

    #[error("natural order is not a perfect elimination order of the pattern")]
    NotPerfectOrder,

    #[error("invalid shape parameter beta = {0}")]
    InvalidShape(f64),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("data do not span the full space (n = {n}, p = {p})")]
    RankDeficientData { n: usize, p: usize },

    #[error("non-finite weight for observation {0}")]
    DivergedWeights(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("off-diagonal {offdiag} breaks diagonal dominance at degree {degree}")]
    NotDiagonallyDominant { offdiag: f64, degree: usize },

    #[error("data shape mismatch: {0}")]
    DataShapeMismatch(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("wrong shape: {0}")]
    WrongShape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
