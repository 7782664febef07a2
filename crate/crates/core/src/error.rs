use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown task id {0}")]
    UnknownTask(usize),

    #[error("task id {0} has already been observed")]
    DuplicateTask(usize),

    #[error("task {task_id}: class count {got} does not match previously seen {expected}")]
    ClassCountMismatch {
        task_id: usize,
        expected: usize,
        got: usize,
    },

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("leaf id {leaf} out of range for tree {tree} with {leaves} leaves")]
    UnknownLeaf {
        tree: usize,
        leaf: usize,
        leaves: usize,
    },

    #[error("k-NN voter holds no points")]
    EmptyVoter,

    #[error("not enough existing trees to recruit from: need {needed}, have {available}")]
    NotEnoughTrees { needed: usize, available: usize },

    #[error("{path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("model file is corrupt: {0}")]
    Corrupt(String),

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
