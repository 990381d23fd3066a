use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty surface form")]
    EmptySurface,

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("invalid feature key `{0}`")]
    FeatureKey(String),

    #[error("no entities survive the frequency cutoff (min_count = {min_count})")]
    EmptyGraph { min_count: u64 },

    #[error("inconsistent counts: X_ec = {count} with column sum {column_sum}")]
    InconsistentCounts { count: u64, column_sum: u64 },

    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("feature set is empty")]
    EmptyFeatureSet,

    #[error("expanded set is empty")]
    EmptyExpandedSet,

    #[error("no context feature touches the expanded set")]
    EmptySelection,

    #[error("unknown seed entity `{0}`")]
    UnknownSeed(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("ground truth for class `{0}` is empty")]
    EmptyGroundTruth(String),

    #[error("cannot average an empty list of scores")]
    EmptyAverage,

    #[error("index file: {0}")]
    IndexFormat(String),

    #[error("index format version {found} is not supported (this build reads version {expected})")]
    IndexVersion { found: u32, expected: u32 },

    #[error("index checksum mismatch (file is corrupted)")]
    IndexChecksum,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
