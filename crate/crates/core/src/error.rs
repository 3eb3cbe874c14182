use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension n = {0}: the conformal Laplacian needs n >= 3")]
    Dimension(usize),

    #[error("point is not on the unit sphere (norm {0})")]
    NotUnit(f64),

    #[error("point has {found} coordinates, expected {expected}")]
    Arity { expected: usize, found: usize },

    #[error("stereographic projection is singular at its base point")]
    PoleSingularity,

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("conformal factor violates the floor {floor:e}: min value {min:e}")]
    FactorFloor { floor: f64, min: f64 },

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("degenerate test function: zero denominator in the Rayleigh quotient")]
    DegenerateTestFunction,

    #[error("mass matrix is not positive definite (block j = {block})")]
    NotPositiveDefinite { block: usize },

    #[error("requested eigenvalue index {k} lies beyond the trusted range ({trusted} values)")]
    TruncationInsufficient { k: usize, trusted: usize },

    #[error("measure too concentrated: max atom {max_atom:e} exceeds m(X)/(8k) = {limit:e}")]
    MeasureConcentrated { max_atom: f64, limit: f64 },

    #[error("annulus decomposition not found: {0}")]
    DecompositionNotFound(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
