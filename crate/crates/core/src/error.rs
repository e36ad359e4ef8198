use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("infeasible marginals: weights sum to {sum}, expected 1")]
    MarginalInfeasible { sum: f64 },

    #[error(
        "transport solver did not converge after {pivots} pivots \
         (most negative reduced cost {min_reduced_cost:e}, {degenerate_pivots} degenerate)"
    )]
    NonConvergence { pivots: usize, degenerate_pivots: usize, min_reduced_cost: f64 },

    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("all target density values are zero on the proposal samples")]
    EmptySupport,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than a
    /// failure during computation.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}
