//! Scenario generators, metrics, bound envelopes and seed sweeps for the
//! primal-dual constrained MDP learner.

pub mod check;
pub mod envelope;
pub mod experiment;
pub mod fit;
pub mod instances;
pub mod metrics;
pub mod scenario;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{field}: {detail}")]
    Config { field: String, detail: String },
    #[error(transparent)]
    Core(#[from] cmdp_core::Error),
    #[error("malformed JSON")]
    Json(#[from] serde_json::Error),
    #[error("CSV output failed")]
    Csv(#[from] csv::Error),
    #[error("I/O failed")]
    Io(#[from] std::io::Error),
    #[error("series has {0} points, a slope fit needs at least 32")]
    ShortSeries(usize),
}
