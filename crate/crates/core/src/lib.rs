//! Per-example consistency scores (C-scores) for labeled datasets.
//!
//! A C-score is the expected holdout accuracy on one example of models trained
//! from scratch on random subsets of the remaining data, averaged over a grid
//! of subset ratios. This crate estimates those scores with a built-in
//! deterministic MLP trainer, computes the cheap proxies that approximate them
//! (kernel density, local outlier factor, learning-speed statistics,
//! forgetting events) and runs the downstream analyses.
//!
//! Module map:
//!
//! - [`dataset`]: examples, synthetic benchmark generation, IDX parsing, label flips
//! - [`learner`]: MLP, optimizers, learning-rate schedules, per-example traces
//! - [`estimator`]: holdout retraining, score aggregation, profiles, sensitivity
//! - [`proxies`]: kernel-density, LOF and learning-speed proxy scores
//! - [`analysis`]: rank correlation, binning, detection rate, experiment harnesses
//! - [`config`] and [`cli`]: the configuration-driven command-line front end

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod learner;
pub mod proxies;
pub mod seed;

pub use error::{Error, Result};
