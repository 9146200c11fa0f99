use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

use super::optim::Optimizer;
use super::{gather_rows, Model, OptimizerConfig, ScheduleSpec};

/// Statistics of every evaluated example after one epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochStats {
    pub correct: Vec<bool>,
    pub prob_correct: Vec<f64>,
    pub prob_max: Vec<f64>,
    pub entropy: Vec<f64>,
}

/// Per-epoch, per-example records of one training run. Column `j` of every
/// epoch refers to dataset example `eval_indices[j]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub eval_indices: Vec<usize>,
    pub epochs: Vec<EpochStats>,
}

impl TrainingTrace {
    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

fn epoch_stats(model: &Model, eval_features: &[f32], dim: usize, labels: &[usize]) -> Result<EpochStats> {
    let preds = model.predict(eval_features, dim)?;
    let mut stats = EpochStats {
        correct: Vec::with_capacity(labels.len()),
        prob_correct: Vec::with_capacity(labels.len()),
        prob_max: Vec::with_capacity(labels.len()),
        entropy: Vec::with_capacity(labels.len()),
    };
    for ((row, &pred), &y) in preds.probabilities.rows().into_iter().zip(&preds.labels).zip(labels) {
        stats.correct.push(pred == y);
        stats.prob_correct.push(row[y]);
        stats.prob_max.push(row[pred]);
        stats
            .entropy
            .push(-row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>());
    }
    Ok(stats)
}

/// Mini-batch training on `train_indices`.
///
/// Each epoch visits the training examples in a fresh permutation drawn from
/// `opt.seed`; the final batch of an epoch may be short. After every epoch the
/// examples in `eval_indices` (the training subset when `None`) are evaluated
/// with the current weights and appended to the trace.
pub fn train(
    mut model: Model,
    dataset: &Dataset,
    train_indices: &[usize],
    opt: &OptimizerConfig,
    sched: &ScheduleSpec,
    eval_indices: Option<&[usize]>,
) -> Result<(Model, TrainingTrace)> {
    opt.validate()?;
    sched.validate()?;
    if dataset.dim() != model.arch().input {
        return Err(Error::DimensionMismatch {
            expected: model.arch().input,
            actual: dataset.dim(),
        });
    }
    if dataset.num_classes() > model.arch().output {
        return Err(Error::invalid(format!(
            "dataset has {} classes but the model outputs {}",
            dataset.num_classes(),
            model.arch().output
        )));
    }
    let eval: Vec<usize> = eval_indices.unwrap_or(train_indices).to_vec();
    let n = dataset.len();
    if let Some(&bad) = train_indices.iter().chain(&eval).find(|&&i| i >= n) {
        return Err(Error::invalid(format!("index {bad} out of range for N={n}")));
    }
    let mut trace = TrainingTrace {
        eval_indices: eval.clone(),
        epochs: Vec::with_capacity(opt.epochs),
    };
    if opt.epochs == 0 {
        return Ok((model, trace));
    }
    if train_indices.is_empty() {
        return Err(Error::invalid("cannot train on an empty index set"));
    }

    let dim = dataset.dim();
    let eval_features: Vec<f32> = eval.iter().flat_map(|&i| dataset.row(i).iter().copied()).collect();
    let eval_labels: Vec<usize> = eval.iter().map(|&i| dataset.labels()[i]).collect();

    let steps_per_epoch = train_indices.len().div_ceil(opt.batch_size);
    let total = (steps_per_epoch * opt.epochs) as f64;
    let mut optimizer = Optimizer::new(opt, &model);
    let mut rng = seed::rng(opt.seed);
    let mut order = train_indices.to_vec();
    let mut step = 0usize;
    for _ in 0..opt.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opt.batch_size) {
            let x = gather_rows(dataset, batch);
            let y: Vec<usize> = batch.iter().map(|&i| dataset.labels()[i]).collect();
            let (_, grads) = model.loss_and_gradients(x.view(), &y);
            let lr = sched.rate(step as f64, total, opt.learning_rate);
            optimizer.apply(&mut model, grads, lr);
            step += 1;
        }
        if !eval.is_empty() {
            trace.epochs.push(epoch_stats(&model, &eval_features, dim, &eval_labels)?);
        } else {
            trace.epochs.push(EpochStats::default());
        }
    }
    Ok((model, trace))
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    epoch: usize,
    example_index: usize,
    correct: u8,
    prob_correct: f64,
    prob_max: f64,
    entropy: f64,
}

/// CSV `epoch,example_index,correct,prob_correct,prob_max,entropy`, epochs from 1.
pub fn write_trace_csv(trace: &TrainingTrace, path: &Path) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    for (e, stats) in trace.epochs.iter().enumerate() {
        for (j, &idx) in trace.eval_indices.iter().enumerate().take(stats.correct.len()) {
            w.serialize(TraceRow {
                epoch: e + 1,
                example_index: idx,
                correct: u8::from(stats.correct[j]),
                prob_correct: stats.prob_correct[j],
                prob_max: stats.prob_max[j],
                entropy: stats.entropy[j],
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<TrainingTrace> {
    let mut r = crate::error::csv_reader(path)?;
    let mut trace = TrainingTrace::default();
    for (line, row) in r.deserialize::<TraceRow>().enumerate() {
        let line = line + 2;
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let row = row.map_err(|e| malformed(e.to_string()))?;
        if row.epoch == 0 || row.epoch > trace.epochs.len() + 1 {
            return Err(malformed(format!("epoch {} out of sequence", row.epoch)));
        }
        if row.epoch == trace.epochs.len() + 1 {
            trace.epochs.push(EpochStats::default());
        }
        let e = row.epoch - 1;
        let j = trace.epochs[e].correct.len();
        if e == 0 {
            trace.eval_indices.push(row.example_index);
        } else if trace.eval_indices.get(j) != Some(&row.example_index) {
            return Err(malformed(format!("example {} out of order", row.example_index)));
        }
        let stats = &mut trace.epochs[e];
        stats.correct.push(row.correct != 0);
        stats.prob_correct.push(row.prob_correct);
        stats.prob_max.push(row.prob_max);
        stats.entropy.push(row.entropy);
    }
    Ok(trace)
}
