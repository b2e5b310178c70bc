//! Two-phase target/feature aggregation for multi-task linear regression,
//! synthetic benchmarks, and a Monte-Carlo suite that checks the asymptotic
//! bias and variance formulas behind the aggregation tests.

pub mod aggregation;
pub mod data;
pub mod error;
pub mod linstats;
pub mod oracle;
pub mod synth;

pub use aggregation::{
    aggregation_loop, compute_threshold_features, compute_threshold_targets, nonlin_ctfa,
    nonlin_ctfa_homogeneous, replay_trace, LoopInput, ThresholdReport, ThresholdTest,
};
pub use data::{
    apply_partition, center, load_dataset, save_dataset, AggregationResult, Dataset, Partition,
    ResultDocument, Schema, Variant,
};
pub use error::{ConfigError, DataError, Error, Result, StatsError};
pub use linstats::{ols_fit, r2_score, var_res, OlsFit};
