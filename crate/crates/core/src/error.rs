use crate::game::Belief;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("malformed game spec: {0}")]
    Spec(String),

    #[error("trajectory has {got} transitions, horizon is {expected}")]
    Length { expected: usize, got: usize },

    /// Bayesian update with no posterior mass left. Carries the incoming belief unchanged.
    #[error("observation has zero likelihood under every type with positive belief")]
    BeliefUpdate { belief: Belief },

    #[error("{what}: size {size} exceeds cap {cap}")]
    Capacity { what: String, size: u128, cap: u128 },

    #[error("augmented state not in solution table: {0}")]
    UnknownState(String),

    #[error("invalid human model: {0}")]
    Model(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidAction(_) => "invalid_action",
            Error::Spec(_) => "spec_error",
            Error::Length { .. } => "length_error",
            Error::BeliefUpdate { .. } => "belief_update_error",
            Error::Capacity { .. } => "capacity_error",
            Error::UnknownState(_) => "unknown_state",
            Error::Model(_) => "model_error",
            Error::Config(_) => "config_error",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Csv(_) => "csv_error",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
