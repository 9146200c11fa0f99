//! Retraining experiments driven by a score ranking.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learner::{Model, TrainerConfig};
use crate::seed;

use super::bins::{bin_by_score, learning_curves_by_bin, BinAssignment, BinCurves, BinScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    /// Mean test accuracy over the repeats; `None` when degenerate.
    pub mean: Option<f64>,
    /// Population standard deviation over the repeats.
    pub std: Option<f64>,
    pub accuracies: Vec<f64>,
    /// Set when the removal emptied a class in at least one repeat.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalPoint {
    pub count: usize,
    pub lowest: ArmResult,
    pub random: ArmResult,
}

fn accuracy(model: &Model, test: &Dataset) -> Result<f64> {
    let preds = model.predict_dataset(test)?;
    let hits = preds.labels.iter().zip(test.labels()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / test.len() as f64)
}

/// Indices of `train` ordered from least to most consistent: ascending score,
/// undefined scores last, ties by index.
pub fn ascending_ranking(scores: &[Option<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match (scores[a], scores[b]) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    order
}

fn summarize(runs: Vec<Option<f64>>) -> ArmResult {
    let degenerate = runs.iter().any(Option::is_none);
    let accuracies: Vec<f64> = runs.into_iter().flatten().collect();
    if degenerate || accuracies.is_empty() {
        return ArmResult {
            mean: None,
            std: None,
            accuracies,
            degenerate,
        };
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    ArmResult {
        mean: Some(mean),
        std: Some(var.sqrt()),
        accuracies,
        degenerate,
    }
}

/// Trains on `train` minus `count` removed examples and reports accuracy on
/// `test`, for the lowest-ranked removal and for uniform random removal.
///
/// Repeat `r` of every count and both arms uses the same model seed
/// `derive(seed, r)`, so the arms are paired; the random arm draws its removed
/// set from `derive(derive_named(derive(seed, r), "removal"), count)`.
pub fn removal_experiment(
    train: &Dataset,
    test: &Dataset,
    scores: &[Option<f64>],
    removal_counts: &[usize],
    trainer: &TrainerConfig,
    repeats: usize,
    seed: u64,
) -> Result<Vec<RemovalPoint>> {
    trainer.validate()?;
    let n = train.len();
    if scores.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: scores.len(),
        });
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    if test.is_empty() {
        return Err(Error::invalid("removal experiment needs a non-empty test split"));
    }
    if let Some(&c) = removal_counts.iter().find(|&&c| c >= n) {
        return Err(Error::invalid(format!("removal count {c} must be < N = {n}")));
    }
    let ranking = ascending_ranking(scores);
    let present: Vec<bool> = train.class_counts().iter().map(|&c| c > 0).collect();

    let jobs: Vec<(usize, usize, bool)> = removal_counts
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| (0..repeats).flat_map(move |r| [(ci, r, false), (ci, r, true)]))
        .collect();
    let results: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(ci, r, random)| {
            let count = removal_counts[ci];
            let run_seed = seed::derive(seed, r as u64);
            let mut removed = vec![false; n];
            if random {
                let s = seed::derive(seed::derive_named(run_seed, "removal"), count as u64);
                for i in sample(&mut seed::rng(s), n, count) {
                    removed[i] = true;
                }
            } else {
                for &i in &ranking[..count] {
                    removed[i] = true;
                }
            }
            let kept: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
            let mut left = vec![false; present.len()];
            for &i in &kept {
                left[train.labels()[i]] = true;
            }
            if present.iter().zip(&left).any(|(&p, &l)| p && !l) {
                return Ok(None);
            }
            let (model, _) = trainer.fit(train, &kept, run_seed, Some(&[]))?;
            accuracy(&model, test).map(Some)
        })
        .collect::<Result<_>>()?;

    Ok(removal_counts
        .iter()
        .enumerate()
        .map(|(ci, &count)| {
            let arm = |random: bool| {
                summarize(
                    jobs.iter()
                        .zip(&results)
                        .filter(|((c, _, rnd), _)| *c == ci && *rnd == random)
                        .map(|(_, &a)| a)
                        .collect(),
                )
            };
            RemovalPoint {
                count,
                lowest: arm(false),
                random: arm(true),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizedGroups {
    pub bins: BinAssignment,
    /// Examples kept from each bin, ascending.
    pub groups: Vec<Vec<usize>>,
    /// Set when some non-empty bin had fewer than `group_size` examples.
    pub truncated: bool,
    pub curves: BinCurves,
}

/// Bins by value range, subsamples every non-empty bin to `group_size`
/// (fewer if the bin is smaller, with a warning), trains one model on the
/// union and traces per-bin training accuracy.
pub fn equalized_group_experiment(
    dataset: &Dataset,
    scores: &[Option<f64>],
    bins: usize,
    group_size: usize,
    trainer: &TrainerConfig,
    seed: u64,
) -> Result<EqualizedGroups> {
    trainer.validate()?;
    if scores.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            actual: scores.len(),
        });
    }
    if group_size == 0 {
        return Err(Error::invalid("group size must be >= 1"));
    }
    let assignment = bin_by_score(scores, bins, BinScheme::ValueRange)?;
    let sample_seed = seed::derive_named(seed, "groups");
    let mut truncated = false;
    let groups: Vec<Vec<usize>> = (0..bins)
        .map(|b| {
            let members = assignment.members(b);
            if members.is_empty() {
                return Vec::new();
            }
            if members.len() < group_size {
                truncated = true;
                log::warn!("bin {b} holds {} examples, fewer than group size {group_size}", members.len());
            }
            let take = group_size.min(members.len());
            let mut rng = seed::rng(seed::derive(sample_seed, b as u64));
            let mut chosen: Vec<usize> = sample(&mut rng, members.len(), take)
                .into_iter()
                .map(|k| members[k])
                .collect();
            chosen.sort_unstable();
            chosen
        })
        .collect();
    let mut union: Vec<usize> = groups.iter().flatten().copied().collect();
    union.sort_unstable();
    let (_, trace) = trainer.fit(dataset, &union, seed::derive_named(seed, "train"), None)?;
    let curves = learning_curves_by_bin(&trace, &assignment)?;
    Ok(EqualizedGroups {
        bins: assignment,
        groups,
        truncated,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::OptimizerConfig;

    fn blobs() -> (Dataset, Dataset) {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let y = i % 2;
            let c = if y == 0 { -1.0 } else { 1.0 };
            feats.push(c + ((i * 7 % 5) as f32 - 2.0) * 0.1);
            feats.push(c + ((i * 3 % 7) as f32 - 3.0) * 0.1);
            labels.push(y);
        }
        let d = Dataset::new(feats, 2, labels, 2).unwrap();
        d.split(0.25, 3).unwrap()
    }

    fn quick() -> TrainerConfig {
        TrainerConfig {
            hidden: vec![8],
            optimizer: OptimizerConfig::sgd(0.1, 8, 5),
            schedule: Default::default(),
        }
    }

    #[test]
    fn zero_removal_arms_match() {
        let (train, test) = blobs();
        let scores: Vec<Option<f64>> = (0..train.len()).map(|i| Some(i as f64)).collect();
        let pts = removal_experiment(&train, &test, &scores, &[0, 5], &quick(), 2, 11).unwrap();
        assert_eq!(pts[0].lowest, pts[0].random);
        assert!(pts[1].lowest.mean.is_some());
    }

    #[test]
    fn emptied_class_is_degenerate() {
        let (train, test) = blobs();
        // class 0 ranked lowest, remove all of it
        let scores: Vec<Option<f64>> = train.labels().iter().map(|&y| Some(y as f64)).collect();
        let zeros = train.class_counts()[0];
        let pts = removal_experiment(&train, &test, &scores, &[zeros], &quick(), 1, 0).unwrap();
        assert!(pts[0].lowest.degenerate);
        assert_eq!(pts[0].lowest.mean, None);
    }

    #[test]
    fn ranking_puts_undefined_last() {
        assert_eq!(ascending_ranking(&[None, Some(0.5), Some(0.1), Some(0.5)]), vec![2, 1, 3, 0]);
    }

    #[test]
    fn equal_groups() {
        let (train, _) = blobs();
        let scores: Vec<Option<f64>> = (0..train.len()).map(|i| Some((i % 9) as f64)).collect();
        let g = equalized_group_experiment(&train, &scores, 3, 4, &quick(), 1).unwrap();
        assert!(g.groups.iter().all(|grp| grp.len() == 4));
        assert!(!g.truncated);
        assert_eq!(g.curves.overall.len(), 5);
    }
}
