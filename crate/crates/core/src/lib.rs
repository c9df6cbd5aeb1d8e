//! Partition-parallel evolving fuzzy-rule classification.
//!
//! A data stream is split into contiguous partitions, each trained in a
//! single pass by an evolving Takagi-Sugeno classifier (optionally behind a
//! budgeted active-learning filter). The partition models are then fused,
//! either by merging their rules into one compact model or by model-level
//! majority voting.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod data;
pub mod error;
pub mod experiment;
pub mod format;
pub mod learner;
pub mod merge;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod report;
pub mod vote;

pub use active::{AlConfig, AlState};
pub use data::{load_csv, normalize, synth_stream, CsvOptions, Dataset, NormMethod, SynthSpec};
pub use error::{Error, Result};
pub use experiment::{run_k_sweep, run_structure, Aggregation, StructureSpec};
pub use format::{read_model, write_model};
pub use learner::{train_partition, Learner, LearnerConfig};
pub use merge::{merge_models, MergeConfig, MergeReport};
pub use model::{infer, Model, Prediction, Rule};
pub use partition::{make_plan, train_all, InitialModel, PartitionPlan};
pub use report::{emit_report, RunReport};
pub use vote::{vote, vote_batch, Ensemble};
