use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learner::TrainerConfig;

use super::matrix::{run_seed, sample_row, BinaryMatrix, LossMatrix, MaskMatrix};

/// Mask and loss matrices from `k` holdout runs at one subset ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RunBatch {
    pub ratio: f64,
    pub mask: MaskMatrix,
    pub loss: LossMatrix,
    pub seeds: Vec<u64>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub ratio: f64,
    pub subset_size: usize,
    pub runs: usize,
    pub examples: usize,
    pub seeds: Vec<u64>,
    pub config_digest: String,
}

impl RunBatch {
    pub fn runs(&self) -> usize {
        self.mask.runs()
    }

    pub fn examples(&self) -> usize {
        self.mask.examples()
    }

    pub fn meta(&self) -> BatchMeta {
        BatchMeta {
            ratio: self.ratio,
            subset_size: self.mask.subset_size,
            runs: self.runs(),
            examples: self.examples(),
            seeds: self.seeds.clone(),
            config_digest: self.config_digest.clone(),
        }
    }

    /// The batch restricted to the given runs, in the given order.
    pub fn select_runs(&self, runs: &[usize]) -> Result<RunBatch> {
        if let Some(&r) = runs.iter().find(|&&r| r >= self.runs()) {
            return Err(Error::invalid(format!("run {r} out of range (k={})", self.runs())));
        }
        Ok(RunBatch {
            ratio: self.ratio,
            mask: MaskMatrix {
                matrix: self.mask.matrix.select_rows(runs),
                subset_size: self.mask.subset_size,
            },
            loss: LossMatrix {
                matrix: self.loss.matrix.select_rows(runs),
            },
            seeds: runs.iter().map(|&r| self.seeds[r]).collect(),
            config_digest: self.config_digest.clone(),
        })
    }

    /// Runs `[0, at)` and `[at, k)` as two disjoint batches.
    pub fn split_runs(&self, at: usize) -> Result<(RunBatch, RunBatch)> {
        let at = at.min(self.runs());
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.runs()).collect();
        Ok((self.select_runs(&head)?, self.select_runs(&tail)?))
    }
}

/// `round(s·N)` with ties to even; `s` must lie in (0, 1].
pub fn subset_size(ratio: f64, n_total: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!("subset ratio {ratio} not in (0, 1]")));
    }
    let n = (ratio * n_total as f64).round_ties_even() as usize;
    if n == 0 {
        return Err(Error::invalid(format!(
            "subset ratio {ratio} gives an empty subset for N={n_total}"
        )));
    }
    Ok(n.min(n_total))
}

/// Trains `k` fresh models on random subsets and records every model's
/// 0-1 loss on all `N` examples. Runs execute on the rayon pool; results are
/// assembled in run order, so the batch does not depend on scheduling.
pub fn run_holdout(dataset: &Dataset, ratio: f64, k: usize, trainer: &TrainerConfig, seed: u64) -> Result<RunBatch> {
    trainer.validate()?;
    if k == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    let n_total = dataset.len();
    let n = subset_size(ratio, n_total)?;
    let rows: Vec<(Vec<bool>, Vec<bool>, u64)> = (0..k)
        .into_par_iter()
        .map(|i| {
            let rs = run_seed(seed, i);
            let subset = sample_row(n_total, n, rs);
            let (model, _) = trainer
                .fit(dataset, &subset, rs, Some(&[]))
                .map_err(|e| Error::Run { run: i, source: Box::new(e) })?;
            let preds = model
                .predict_dataset(dataset)
                .map_err(|e| Error::Run { run: i, source: Box::new(e) })?;
            let mut mask = vec![false; n_total];
            for j in subset {
                mask[j] = true;
            }
            let loss = preds
                .labels
                .iter()
                .zip(dataset.labels())
                .map(|(p, y)| p != y)
                .collect();
            Ok((mask, loss, rs))
        })
        .collect::<Result<_>>()?;
    let mut mask = BinaryMatrix::zeros(k, n_total);
    let mut loss = BinaryMatrix::zeros(k, n_total);
    let mut seeds = Vec::with_capacity(k);
    for (i, (m, l, s)) in rows.into_iter().enumerate() {
        mask.row_mut(i).copy_from_slice(&m);
        loss.row_mut(i).copy_from_slice(&l);
        seeds.push(s);
    }
    Ok(RunBatch {
        ratio,
        mask: MaskMatrix {
            matrix: mask,
            subset_size: n,
        },
        loss: LossMatrix { matrix: loss },
        seeds,
        config_digest: trainer.digest(),
    })
}

fn write_matrix(m: &BinaryMatrix, path: &Path) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    w.write_record((0..m.cols()).map(|j| j.to_string()))?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|&b| if b { "1" } else { "0" }))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path, cols: usize) -> Result<BinaryMatrix> {
    let mut r = crate::error::csv_reader(path)?;
    let header = r.headers()?.clone();
    let malformed = |line: usize, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    if header.len() != cols || header.iter().enumerate().any(|(j, h)| h != j.to_string()) {
        return Err(malformed(1, format!("header must list example indices 0..{cols}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| match f {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(malformed(line, format!("expected 0 or 1, found {other:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(BinaryMatrix::zeros(0, cols));
    }
    BinaryMatrix::from_rows(rows)
}

/// Writes `mask.csv`, `loss.csv` and `meta.json` into `dir`.
pub fn write_batch(batch: &RunBatch, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&batch.mask.matrix, &dir.join("mask.csv"))?;
    write_matrix(&batch.loss.matrix, &dir.join("loss.csv"))?;
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&batch.meta())?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))
}

pub fn read_batch(dir: &Path) -> Result<RunBatch> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: BatchMeta = serde_json::from_str(&text)?;
    let mask = read_matrix(&dir.join("mask.csv"), meta.examples)?;
    let loss = read_matrix(&dir.join("loss.csv"), meta.examples)?;
    if mask.rows() != meta.runs || loss.rows() != meta.runs || meta.seeds.len() != meta.runs {
        return Err(Error::invalid(format!("batch in {} is inconsistent with meta.json", dir.display())));
    }
    for r in 0..mask.rows() {
        if mask.row(r).iter().filter(|&&b| b).count() != meta.subset_size {
            return Err(Error::Malformed {
                path: dir.join("mask.csv"),
                line: r + 2,
                message: format!("row does not sum to {}", meta.subset_size),
            });
        }
    }
    Ok(RunBatch {
        ratio: meta.ratio,
        mask: MaskMatrix {
            matrix: mask,
            subset_size: meta.subset_size,
        },
        loss: LossMatrix { matrix: loss },
        seeds: meta.seeds,
        config_digest: meta.config_digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{aggregate_scores, sample_subsets};
    use crate::learner::OptimizerConfig;

    fn toy() -> Dataset {
        let features = (0..24).map(|i| if i < 12 { -1.0 } else { 1.0 } + 0.01 * i as f32).collect();
        Dataset::new(features, 1, (0..24).map(|i| usize::from(i >= 12)).collect(), 2).unwrap()
    }

    fn trainer() -> TrainerConfig {
        TrainerConfig {
            hidden: vec![4],
            optimizer: OptimizerConfig::sgd(0.1, 4, 5),
            schedule: crate::learner::ScheduleSpec::Constant,
        }
    }

    #[test]
    fn full_subset_holds_nothing_out() {
        let d = toy();
        let b = run_holdout(&d, 1.0, 1, &trainer(), 3).unwrap();
        assert!(b.mask.matrix.row(0).iter().all(|&m| m));
        assert!(aggregate_scores(&b.mask, &b.loss).unwrap().iter().all(Option::is_none));
    }

    #[test]
    fn deterministic_and_mask_matches_sampler() {
        let d = toy();
        let a = run_holdout(&d, 0.5, 6, &trainer(), 11).unwrap();
        assert_eq!(a, run_holdout(&d, 0.5, 6, &trainer(), 11).unwrap());
        assert_eq!(a.mask, sample_subsets(24, 12, 6, 11).unwrap());
    }

    #[test]
    fn archive_round_trip() {
        let d = toy();
        let b = run_holdout(&d, 0.3, 3, &trainer(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_batch(&b, dir.path()).unwrap();
        assert_eq!(read_batch(dir.path()).unwrap(), b);
        let header = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
        assert!(header.starts_with("0,1,2,3"));
    }

    #[test]
    fn ratio_validation() {
        assert!(subset_size(0.0, 10).is_err());
        assert!(subset_size(1.5, 10).is_err());
        assert!(subset_size(0.01, 10).is_err());
        assert_eq!(subset_size(0.25, 10).unwrap(), 2);
        assert_eq!(subset_size(0.35, 10).unwrap(), 4);
    }

    #[test]
    fn split_runs_partitions() {
        let d = toy();
        let b = run_holdout(&d, 0.5, 5, &trainer(), 2).unwrap();
        let (h, t) = b.split_runs(2).unwrap();
        assert_eq!((h.runs(), t.runs()), (2, 3));
        assert_eq!(t.seeds, b.seeds[2..].to_vec());
    }
}
