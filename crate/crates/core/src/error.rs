//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("input file {0} has no data")]
    EmptyFile(String),

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumericCell {
        row: u64,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column:?}")]
    NonFiniteValue { row: u64, column: String },

    #[error("bad class label {value} at row {row}: expected integer in [0, {class_count})")]
    BadClassLabel {
        row: u64,
        value: f64,
        class_count: u32,
    },

    #[error("bad data file: {0}")]
    BadDataFile(String),

    #[error("inverted range: lo {lo} > hi {hi}")]
    InvertedRange { lo: u64, hi: u64 },

    #[error("range [{lo},{hi}] out of bounds for dataset of {n} records")]
    RangeOutOfBounds { lo: u64, hi: u64, n: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: A is rank-deficient and lambda is 0")]
    SingularSystem,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("negative count after update: {0}; the composed plan is invalid")]
    NegativeCount(String),

    #[error("descriptors overlap but no overlap statistics were supplied")]
    OverlapStatsRequired,

    #[error("descriptors are disjoint but overlap statistics were supplied")]
    OverlapStatsUnexpected,

    #[error("class label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: i64, class_count: usize },

    #[error("non-binary label {0}: logistic regression expects labels in {{0,1}}")]
    NonBinaryLabel(f64),

    #[error("SGD diverged (non-finite weight); learning rate alpha={alpha} is too large")]
    Divergence { alpha: f64 },

    #[error("chunk size {l} too large for range of {len} points (need l <= len/2)")]
    ChunkTooLarge { l: u64, len: u64 },

    #[error("unknown model id {0}")]
    UnknownModel(String),

    #[error("corrupt payload for model {id}: checksum mismatch (expected {expected}, got {got})")]
    CorruptPayload {
        id: String,
        expected: String,
        got: String,
    },

    #[error("bad catalog index: {0}")]
    BadCatalogIndex(String),

    #[error("delta must be in (0,1), got {0}")]
    DeltaOutOfRange(f64),

    #[error("no plan: destination not reachable in the query graph")]
    NoPlan,

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
