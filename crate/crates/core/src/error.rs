use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("block {index} is {rows}x{cols}, expected a square block")]
    NonSquareBlock { index: usize, rows: usize, cols: usize },

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },

    #[error("matrix asymmetry {asymmetry:e} exceeds tolerance {tol:e}")]
    AsymmetricInput { asymmetry: f64, tol: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("policy does not match the MDP: {0}")]
    PolicyMismatch(String),

    #[error("{count} deterministic policies exceed the enumeration limit {limit}")]
    TooManyPolicies { count: u128, limit: u128 },

    #[error("chain has {closed_classes} closed classes, stationary distribution is not unique")]
    NonUnichain { closed_classes: usize },

    #[error("mode {mode} has spectral radius {rho}, no decay coefficient exists")]
    UnstableMode { mode: usize, rho: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("recomputed solution is inconsistent: {0}")]
    ConsistencyFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
