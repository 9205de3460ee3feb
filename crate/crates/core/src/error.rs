use std::io;

use thiserror::Error;

/// Errors produced anywhere in the augmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid table {id:?}: {reason}")]
    InvalidTable { id: String, reason: String },

    #[error("table has too few rows or columns for {task} with n_seed={n_seed}")]
    InsufficientTable { task: &'static str, n_seed: usize },

    #[error("target cell ({row}, {col}) is out of range")]
    InvalidTargetCell { row: usize, col: usize },

    #[error("target cell ({row}, {col}) is already empty")]
    EmptyTargetCell { row: usize, col: usize },

    #[error("ablation produced an empty gold set")]
    EmptyGold,

    #[error("cell filling requires a target cell")]
    MissingTargetCell,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("candidate spans overlap at byte {at}")]
    OverlappingSpans { at: usize },

    #[error("span {start}..{end} is out of bounds for text of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("no candidates to score")]
    NoCandidates,

    #[error("query tower is frozen and cannot be updated")]
    FrozenModel,

    #[error("non-finite loss {loss} at {context}")]
    NonFiniteLoss { loss: f64, context: String },

    #[error("too few samples for a confidence interval: {0}")]
    TooFewSamples(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown split {0:?}")]
    UnknownSplit(String),

    #[error("artifact format error in {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{0} is not loaded")]
    NotLoaded(&'static str),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
