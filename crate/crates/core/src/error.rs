use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("configuration is not simple: duplicate location {0:?}")]
    DuplicateLocation(Vec<f64>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("environment is not in the tempered class M^{t} (minimal class {minimal})")]
    NotTempered { t: u64, minimal: u64 },

    #[error("environment has infinite energy on its own")]
    InfeasibleEnvironment,

    #[error("diffusion diverged at step {step}: |X| = {norm}")]
    Diverged { step: usize, norm: f64 },

    #[error("rejection sampler acceptance rate {rate:.3e} below floor after {attempts} proposals")]
    LowAcceptance { rate: f64, attempts: u64 },

    #[error("energy drift at step {step}: cached {cached}, recomputed {recomputed}")]
    Drift {
        step: u64,
        cached: f64,
        recomputed: f64,
    },

    #[error("state space too large: {states} states (limit {limit})")]
    StateSpaceOverflow { states: u128, limit: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
