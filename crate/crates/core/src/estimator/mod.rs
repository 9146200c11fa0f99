//! Holdout retraining and consistency-score estimation.
//!
//! For each subset ratio `s`, `k` models are trained from scratch on uniform
//! random subsets of size `n = round(s·N)` and every model predicts all `N`
//! examples. An example's score at that ratio is its accuracy over the runs
//! that did not train on it; the C-score is the mean over ratios.
//!
//! Training dominates the cost: `O(S·(k·T + E))` for `S` ratios, `k` runs
//! per ratio and per-model training time `T`, while aggregation `E` is one
//! elementwise pass over a `k × N` matrix. Memory for aggregation is `O(k·N)`.

mod holdout;
mod matrix;
mod profile;
mod table;

pub use holdout::{read_batch, run_holdout, subset_size, write_batch, BatchMeta, RunBatch};
pub use matrix::{aggregate_scores, sample_subsets, BinaryMatrix, LossMatrix, MaskMatrix};
pub(crate) use matrix::run_seed;
pub use profile::{
    build_profile, integral_cscore, point_estimate_curve, sensitivity_curve, ConsistencyProfile, SensitivityPoint,
};
pub use table::{export_scores, import_scores, Provenance, ScoreEntry, ScoreTable};
