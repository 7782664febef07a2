//! Lifelong learning with omnidirectional decision forests.
//!
//! Each task grows an honest forest (its representer). Every task keeps a
//! voter on every representer, so new tasks reuse old forests and old tasks
//! gain from new ones without any earlier model being modified.

pub mod classifier;
pub mod data;
pub mod env;
pub mod error;
pub mod forest;
pub mod learner;
pub mod metrics;
pub mod persist;
pub mod voter;

pub use classifier::HonestForestClassifier;
pub use data::{
    ingest_csv, read_tasks_csv, split_train_test, subsample_indices, write_tasks_csv, SeedStream,
    TaskDataset, TaskSequence, TaskSplit,
};
pub use env::{
    generate_spirals, generate_xor, rotate_features, shuffle_labels, SpiralSpec, XorSpec,
};
pub use error::{Error, Result};
pub use forest::{
    fit_representer, ForestConfig, ForestRepresenter, SplitCriterion, Tree, TreeNode,
};
pub use learner::{LearnerConfig, OmniLearner, Strategy, StrategyConfig, TaskVoters, VoterKind};
pub use metrics::{
    backward_transfer, error_rate, estimate_error, factorization_check, forward_transfer,
    loglog_slope, transfer_efficiency, Condition, ErrorEstimate, TaskClassifier, TaskTransfer,
    TransferReport,
};
pub use persist::{load_model, save_model};
pub use voter::{LeafVoter, Posterior, Voter};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeDoctests;
