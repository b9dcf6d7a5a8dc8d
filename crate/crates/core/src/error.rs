//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the inference engine and the data layer.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation received an empty input where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Every log-weight is negative infinity; no particle carries mass.
    #[error("degenerate weights: all log-weights are -inf")]
    DegenerateWeights,

    /// A weight vector that must be normalised does not sum to one.
    #[error("weights not normalised (sum = {sum})")]
    UnnormalisedWeights { sum: f64 },

    /// Invalid argument outside a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Parameter vector construction or lookup failure.
    #[error("parameter error: {0}")]
    Param(String),

    /// Model family / variant assembly failure.
    #[error("invalid model specification: {0}")]
    ModelSpec(String),

    /// Data file violates its schema; row/column are 1-based where known.
    #[error("{file}: {message}{}", location_suffix(*row, column))]
    DataSchema {
        file: String,
        message: String,
        row: Option<usize>,
        column: Option<String>,
    },

    /// The SMC sampler lost all weight mass at a tempering step.
    #[error("SMC weight degeneracy at step {step} (temperature {temperature}); diagnostics: {diagnostics}")]
    SmcDegenerate {
        step: usize,
        temperature: f64,
        diagnostics: String,
    },

    /// A linear-algebra operation failed (singular or non-factorisable matrix).
    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location_suffix(row: Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" (row {r}, column {c})"),
        (Some(r), None) => format!(" (row {r})"),
        (None, Some(c)) => format!(" (column {c})"),
        (None, None) => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
