//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not skew-symmetric: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotSkew { defect: f64, tol: f64 },

    #[error("three-form term ({i},{j},{k}) violates i < j < k")]
    BadTriple { i: usize, j: usize, k: usize },

    #[error("duplicate three-form term ({i},{j},{k})")]
    DuplicateTriple { i: usize, j: usize, k: usize },

    #[error("three-form term ({i},{j},{k}) out of range for dimension {dim}")]
    TripleOutOfRange {
        i: usize,
        j: usize,
        k: usize,
        dim: usize,
    },

    #[error("bracket is not compatible with the inner product: max symmetry defect {0:.3e}")]
    NotTotallySkew(f64),

    #[error("transport matrix is not orthogonal: defect {0:.3e}")]
    NotOrthogonal(f64),

    #[error("jacobi identity fails with defect {0:.3e}: not a Lie bracket")]
    NotLieBracket(f64),

    #[error("rank decision is indeterminate: {0}")]
    Indeterminate(String),

    #[error("matrix logarithm does not converge: {0}")]
    LogDivergence(String),

    #[error("no independence witness found: {0}")]
    NoWitness(String),

    #[error("unknown group '{0}'")]
    UnknownGroup(String),

    #[error("unknown catalog key '{0}'")]
    UnknownCatalogKey(String),

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
