//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("backward requires a scalar (1x1) root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("zero total likelihood at timestep {timestep} in the forward recursion")]
    ZeroLikelihood { timestep: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{context} needs at least {min} examples, got {count}")]
    TooFewExamples {
        context: &'static str,
        count: usize,
        min: usize,
    },

    #[error("region {region} has too few examples ({count}, need at least {min})")]
    RegionTooSmall {
        region: usize,
        count: usize,
        min: usize,
    },

    #[error("missing feature name for index {0}")]
    MissingFeatureName(usize),

    #[error("labels contain a single class; metric undefined")]
    SingleClass,

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "loss became non-finite at epoch {epoch}, step {step} \
         (data loss {data_loss}, lambda*penalty {weighted_penalty})"
    )]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        data_loss: f64,
        weighted_penalty: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
