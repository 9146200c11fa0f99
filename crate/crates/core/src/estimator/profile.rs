use rand::seq::index::sample;

use crate::analysis::spearman;
use crate::error::{Error, Result};
use crate::seed;

use super::matrix::aggregate_scores;
use super::table::{Provenance, ScoreTable};
use super::RunBatch;

/// Per-example holdout scores at each sampled subset ratio, ratios ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyProfile {
    pub ratios: Vec<f64>,
    /// `scores[r][j]`: score of example `j` at `ratios[r]`.
    pub scores: Vec<Vec<Option<f64>>>,
    pub runs_per_ratio: Vec<usize>,
    pub seeds: Vec<Vec<u64>>,
}

impl ConsistencyProfile {
    pub fn examples(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Mean profile over a set of examples (defined entries only).
    pub fn mean_profile(&self, members: &[usize]) -> Vec<Option<f64>> {
        self.scores
            .iter()
            .map(|row| {
                let defined: Vec<f64> = members.iter().filter_map(|&j| row[j]).collect();
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
            })
            .collect()
    }
}

pub fn build_profile(batches: &[RunBatch]) -> Result<ConsistencyProfile> {
    let first = batches.first().ok_or_else(|| Error::invalid("no run batches"))?;
    let n = first.examples();
    if let Some(b) = batches.iter().find(|b| b.examples() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.examples(),
        });
    }
    let mut order: Vec<usize> = (0..batches.len()).collect();
    order.sort_by(|&a, &b| batches[a].ratio.total_cmp(&batches[b].ratio));
    let mut profile = ConsistencyProfile {
        ratios: Vec::with_capacity(batches.len()),
        scores: Vec::with_capacity(batches.len()),
        runs_per_ratio: Vec::with_capacity(batches.len()),
        seeds: Vec::with_capacity(batches.len()),
    };
    for i in order {
        let b = &batches[i];
        profile.ratios.push(b.ratio);
        profile.scores.push(aggregate_scores(&b.mask, &b.loss)?);
        profile.runs_per_ratio.push(b.runs());
        profile.seeds.push(b.seeds.clone());
    }
    Ok(profile)
}

/// Mean over ratios of each example's defined entries; undefined only when
/// every ratio is undefined.
pub fn integral_cscore(profile: &ConsistencyProfile, labels: &[usize]) -> Result<ScoreTable> {
    if profile.scores.is_empty() {
        return Err(Error::invalid("empty profile"));
    }
    let n = profile.examples();
    let scores = (0..n)
        .map(|j| {
            let (sum, count) = profile
                .scores
                .iter()
                .filter_map(|row| row[j])
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            (count > 0).then(|| sum / count as f64)
        })
        .collect();
    Ok(ScoreTable::new(scores, labels)?.with_provenance(Provenance {
        ratios: profile.ratios.clone(),
        runs_per_ratio: profile.runs_per_ratio.clone(),
        seeds: profile.seeds.clone(),
    }))
}

fn to_nan(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|s| s.unwrap_or(f64::NAN)).collect()
}

/// Spearman ρ between each ratio's row and the reference score, over jointly
/// defined examples. A ratio with fewer than three such examples (or a
/// constant row) gets `None`.
pub fn point_estimate_curve(profile: &ConsistencyProfile, reference: &ScoreTable) -> Result<Vec<(f64, Option<f64>)>> {
    if reference.len() != profile.examples() {
        return Err(Error::DimensionMismatch {
            expected: profile.examples(),
            actual: reference.len(),
        });
    }
    let reference = reference.scores_nan();
    Ok(profile
        .ratios
        .iter()
        .zip(&profile.scores)
        .map(|(&s, row)| (s, spearman(&to_nan(row), &reference).ok().map(|r| r.value)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPoint {
    pub m: usize,
    pub mean_rho: f64,
    /// Population standard deviation over the repeats with a defined ρ.
    pub std_rho: f64,
    pub samples: usize,
}

/// For each `m`, draws `m` runs of `pool` without replacement `repeats` times,
/// aggregates them and correlates with `reference`. The reference should come
/// from runs disjoint from `pool` (for instance the other half of
/// [`RunBatch::split_runs`]).
pub fn sensitivity_curve(
    pool: &RunBatch,
    m_list: &[usize],
    repeats: usize,
    reference: &[Option<f64>],
    seed: u64,
) -> Result<Vec<SensitivityPoint>> {
    if reference.len() != pool.examples() {
        return Err(Error::DimensionMismatch {
            expected: pool.examples(),
            actual: reference.len(),
        });
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let reference = to_nan(reference);
    m_list
        .iter()
        .map(|&m| {
            if m == 0 || m > pool.runs() {
                return Err(Error::invalid(format!(
                    "m = {m} exceeds the {} available runs",
                    pool.runs()
                )));
            }
            let rhos: Vec<f64> = (0..repeats)
                .filter_map(|r| {
                    let runs: Vec<usize> = if m == pool.runs() && repeats == 1 {
                        (0..m).collect()
                    } else {
                        let mut rng = seed::rng(seed::derive(seed::derive(seed, m as u64), r as u64));
                        let mut runs = sample(&mut rng, pool.runs(), m).into_vec();
                        runs.sort_unstable();
                        runs
                    };
                    let sub = pool.select_runs(&runs).ok()?;
                    let scores = aggregate_scores(&sub.mask, &sub.loss).ok()?;
                    spearman(&to_nan(&scores), &reference).ok().map(|c| c.value)
                })
                .collect();
            let samples = rhos.len();
            let mean = if samples > 0 {
                rhos.iter().sum::<f64>() / samples as f64
            } else {
                f64::NAN
            };
            let var = if samples > 0 {
                rhos.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / samples as f64
            } else {
                f64::NAN
            };
            Ok(SensitivityPoint {
                m,
                mean_rho: mean,
                std_rho: var.sqrt(),
                samples,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{BinaryMatrix, LossMatrix, MaskMatrix};

    fn batch(ratio: f64, mask: &[&[u8]], loss: &[&[u8]]) -> RunBatch {
        let to = |v: &[&[u8]]| BinaryMatrix::from_rows(v.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect()).unwrap();
        let m = to(mask);
        let n = m.row(0).iter().filter(|&&b| b).count();
        RunBatch {
            ratio,
            mask: MaskMatrix {
                matrix: m,
                subset_size: n,
            },
            loss: LossMatrix { matrix: to(loss) },
            seeds: (0..mask.len() as u64).collect(),
            config_digest: String::new(),
        }
    }

    #[test]
    fn single_ratio_profile_equals_aggregate() {
        let b = batch(0.5, &[&[1, 0, 0, 1], &[0, 1, 1, 0]], &[&[0, 1, 0, 0], &[1, 0, 0, 0]]);
        let p = build_profile(std::slice::from_ref(&b)).unwrap();
        assert_eq!(p.scores[0], aggregate_scores(&b.mask, &b.loss).unwrap());
        let t = integral_cscore(&p, &[0, 0, 1, 1]).unwrap();
        assert_eq!(t.scores(), p.scores[0]);
    }

    #[test]
    fn unsorted_ratios_are_sorted_with_rows() {
        let hi = batch(0.75, &[&[1, 1, 1, 0]], &[&[0, 0, 0, 1]]);
        let lo = batch(0.25, &[&[1, 0, 0, 0]], &[&[0, 0, 0, 0]]);
        let p = build_profile(&[hi.clone(), lo.clone()]).unwrap();
        assert_eq!(p.ratios, vec![0.25, 0.75]);
        assert_eq!(p.scores[0], aggregate_scores(&lo.mask, &lo.loss).unwrap());
        assert_eq!(p.scores[1], aggregate_scores(&hi.mask, &hi.loss).unwrap());
    }

    #[test]
    fn mismatched_examples_rejected() {
        let a = batch(0.5, &[&[1, 0]], &[&[0, 0]]);
        let b = batch(0.5, &[&[1, 0, 0]], &[&[0, 0, 0]]);
        assert!(build_profile(&[a, b]).is_err());
    }

    fn profile(rows: Vec<Vec<Option<f64>>>) -> ConsistencyProfile {
        ConsistencyProfile {
            ratios: (0..rows.len()).map(|i| 0.1 + 0.2 * i as f64).collect(),
            runs_per_ratio: vec![1; rows.len()],
            seeds: vec![vec![]; rows.len()],
            scores: rows,
        }
    }

    #[test]
    fn integral_is_mean_of_defined() {
        let p = profile(vec![
            vec![Some(0.2), Some(0.5), None],
            vec![Some(0.4), None, None],
            vec![Some(0.9), Some(1.0), None],
        ]);
        let t = integral_cscore(&p, &[0, 0, 0]).unwrap();
        assert!((t.entries[0].score.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(t.entries[1].score, Some(0.75));
        assert_eq!(t.entries[2].score, None);
    }

    #[test]
    fn point_estimate_identity_and_reversal() {
        let row: Vec<Option<f64>> = (0..6).map(|i| Some(i as f64 / 10.0)).collect();
        let rev: Vec<Option<f64>> = row.iter().rev().copied().collect();
        let p = profile(vec![row.clone(), row.clone(), rev]);
        let reference = ScoreTable::new(row, &[0; 6]).unwrap();
        let curve = point_estimate_curve(&p, &reference).unwrap();
        assert_eq!(curve[0].1, Some(1.0));
        assert_eq!(curve[1].1, Some(1.0));
        assert_eq!(curve[2].1, Some(-1.0));
    }

    #[test]
    fn too_few_defined_is_undefined() {
        let p = profile(vec![vec![Some(0.1), Some(0.2), None, None]]);
        let reference = ScoreTable::new(vec![Some(0.1), Some(0.2), Some(0.3), Some(0.4)], &[0; 4]).unwrap();
        assert_eq!(point_estimate_curve(&p, &reference).unwrap()[0].1, None);
    }
}
