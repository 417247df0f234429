//! Error type shared across the engine.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PabError {
    #[error("topology: {0}")]
    Topology(String),

    #[error("chirp: {0}")]
    Chirp(String),

    #[error("chirp produced no usable windows ({surviving} of {total} packets survived)")]
    EmptyObservation { surviving: usize, total: usize },

    #[error("likelihood: {0}")]
    Likelihood(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("grid mismatch: expected [{expected_lo},{expected_hi}], got [{got_lo},{got_hi}]")]
    GridMismatch {
        expected_lo: u32,
        expected_hi: u32,
        got_lo: u32,
        got_hi: u32,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("measurement: {0}")]
    Measurement(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PabError>;
