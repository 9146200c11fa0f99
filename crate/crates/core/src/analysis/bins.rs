//! Score binning, histograms, per-class statistics and per-bin learning curves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::TrainingTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    /// `B` equal-width bins over `[min, max]`. Bin `b` is `(lo_b, hi_b]`,
    /// except that bin 0 also takes the minimum.
    #[default]
    ValueRange,
    /// Quantile bins; tied scores all go to the bin of their first member.
    EqualCount,
}

impl fmt::Display for BinScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinScheme::ValueRange => "value_range",
            BinScheme::EqualCount => "equal_count",
        })
    }
}

impl FromStr for BinScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value_range" => Ok(BinScheme::ValueRange),
            "equal_count" => Ok(BinScheme::EqualCount),
            other => Err(Error::invalid(format!("unknown bin scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAssignment {
    pub bins: usize,
    pub scheme: BinScheme,
    /// Bin of each example; `None` for undefined scores.
    pub assignment: Vec<Option<usize>>,
}

impl BinAssignment {
    pub fn members(&self, bin: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == Some(bin))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.bins];
        for b in self.assignment.iter().flatten() {
            sizes[*b] += 1;
        }
        sizes
    }
}

pub fn bin_by_score(scores: &[Option<f64>], bins: usize, scheme: BinScheme) -> Result<BinAssignment> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be >= 1"));
    }
    if scores.iter().flatten().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN; use None for undefined"));
    }
    let defined: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i, v)))
        .collect();
    if defined.is_empty() {
        return Err(Error::invalid("all scores are undefined"));
    }
    let mut assignment = vec![None; scores.len()];
    match scheme {
        BinScheme::ValueRange => {
            let lo = defined.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
            let hi = defined.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
            for &(i, v) in &defined {
                let b = if hi > lo {
                    let t = (v - lo) / (hi - lo) * bins as f64;
                    (t.ceil() as usize).clamp(1, bins) - 1
                } else {
                    0
                };
                assignment[i] = Some(b);
            }
        }
        BinScheme::EqualCount => {
            let mut order = defined.clone();
            order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let m = order.len();
            let mut prev: Option<(f64, usize)> = None;
            for (r, &(i, v)) in order.iter().enumerate() {
                let b = match prev {
                    Some((pv, pb)) if pv == v => pb,
                    _ => r * bins / m,
                };
                assignment[i] = Some(b);
                prev = Some((v, b));
            }
        }
    }
    Ok(BinAssignment {
        bins,
        scheme,
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Counts of `bin_count` equal-width bins on `[0, 1]`; bin `b` is
    /// `[b/B, (b+1)/B)` and the last bin also takes 1.
    pub counts: Vec<usize>,
    pub undefined: usize,
    /// Defined scores outside `[0, 1]`.
    pub out_of_range: usize,
}

pub fn histogram(scores: &[Option<f64>], bin_count: usize) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(Error::invalid("bin count must be >= 1"));
    }
    let mut h = Histogram {
        counts: vec![0; bin_count],
        undefined: 0,
        out_of_range: 0,
    };
    for s in scores {
        match s {
            Some(v) if (0.0..=1.0).contains(v) => {
                let b = ((v * bin_count as f64) as usize).min(bin_count - 1);
                h.counts[b] += 1;
            }
            Some(_) => h.out_of_range += 1,
            None => h.undefined += 1,
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: usize,
    pub count: usize,
    /// `None` when the class has no defined score.
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub sd: Option<f64>,
}

/// Statistics for classes `0..=max(label)`.
pub fn per_class_stats(scores: &[Option<f64>], labels: &[usize]) -> Result<Vec<ClassStats>> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); classes];
    for (s, &y) in scores.iter().zip(labels) {
        if let Some(v) = s {
            groups[y].push(*v);
        }
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(class, g)| {
            if g.is_empty() {
                return ClassStats {
                    class,
                    count: 0,
                    mean: None,
                    sd: None,
                };
            }
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            ClassStats {
                class,
                count: g.len(),
                mean: Some(mean),
                sd: Some(var.sqrt()),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCurves {
    /// `curves[b][e]`: mean accuracy of bin `b` after epoch `e + 1`; `None`
    /// when no traced example falls in the bin.
    pub curves: Vec<Option<Vec<f64>>>,
    pub sizes: Vec<usize>,
    /// Mean accuracy over every traced example.
    pub overall: Vec<f64>,
}

impl BinCurves {
    /// Max minus min accuracy over non-empty bins after `epoch` (1-based).
    pub fn spread(&self, epoch: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .curves
            .iter()
            .flatten()
            .filter_map(|c| c.get(epoch.checked_sub(1)?).copied())
            .collect();
        if vals.is_empty() {
            return None;
        }
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        Some(hi - lo)
    }

    /// Accuracy of each bin after `epoch` (1-based).
    pub fn at_epoch(&self, epoch: usize) -> Vec<Option<f64>> {
        self.curves
            .iter()
            .map(|c| c.as_ref().and_then(|c| c.get(epoch.wrapping_sub(1)).copied()))
            .collect()
    }
}

/// `bins` is indexed by dataset example; traced examples without a bin count
/// towards the overall curve only.
pub fn learning_curves_by_bin(trace: &TrainingTrace, bins: &BinAssignment) -> Result<BinCurves> {
    if let Some(&bad) = trace.eval_indices.iter().find(|&&i| i >= bins.assignment.len()) {
        return Err(Error::invalid(format!("traced example {bad} has no bin entry")));
    }
    let member_cols: Vec<Vec<usize>> = (0..bins.bins)
        .map(|b| {
            trace
                .eval_indices
                .iter()
                .enumerate()
                .filter(|(_, &i)| bins.assignment[i] == Some(b))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mean_acc = |cols: &[usize]| -> Vec<f64> {
        trace
            .epochs
            .iter()
            .map(|s| cols.iter().filter(|&&j| s.correct[j]).count() as f64 / cols.len() as f64)
            .collect()
    };
    let all: Vec<usize> = (0..trace.eval_indices.len()).collect();
    Ok(BinCurves {
        curves: member_cols
            .iter()
            .map(|cols| (!cols.is_empty()).then(|| mean_acc(cols)))
            .collect(),
        sizes: member_cols.iter().map(Vec::len).collect(),
        overall: if all.is_empty() {
            vec![f64::NAN; trace.num_epochs()]
        } else {
            mean_acc(&all)
        },
    })
}
