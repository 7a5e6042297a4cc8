//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset handling, privacy accounting, model fitting
/// and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    // --- dataset ---
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: usize, msg: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("inconsistent planted spec: {0}")]
    InconsistentSpec(String),
    #[error("degenerate feature {0}: {1}")]
    DegenerateFeature(usize, String),

    // --- privacy ---
    #[error("invalid privacy parameters: {0}")]
    InvalidParams(String),
    #[error("numerical overflow in accountant: {0}")]
    NumericalOverflow(String),
    #[error("accountant state is empty")]
    EmptyState,
    #[error("privacy target unachievable: {0}")]
    Unachievable(String),

    // --- nn ---
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at step {step}: {value}")]
    NonFiniteLoss { step: usize, value: f64 },

    // --- generators / marginals ---
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("input is not discretized: {0}")]
    UnbinnedInput(String),
    #[error("degenerate marginal table over clique {0:?}")]
    DegenerateTable(Vec<usize>),

    // --- evaluation ---
    #[error("histogram bin mismatch: {0} vs {1} bins")]
    BinMismatch(usize, usize),
    #[error("reference set is empty")]
    EmptyReference,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("zero variance in correlation input")]
    ZeroVariance,
    #[error("no valid class pairs to aggregate")]
    NoValidPairs,
    #[error("node set mismatch: {0} vs {1} genes")]
    NodeSetMismatch(usize, usize),
    #[error("network has no edges")]
    EmptyNetwork,

    // --- attack ---
    #[error("empty set: {0}")]
    EmptySet(String),

    // --- io ---
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
