use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid occupancy measure: condition {condition} violated ({detail})")]
    InvalidOccupancy {
        condition: &'static str,
        detail: String,
    },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("`{field}` entry {index} = {value} is outside {range}")]
    OutOfRange {
        field: &'static str,
        index: usize,
        value: f64,
        range: &'static str,
    },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("invariant failure at episode {episode}: {detail}")]
    InvariantFailure { episode: usize, detail: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
