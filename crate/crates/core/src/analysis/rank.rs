//! Spearman ρ with average-tie ranks and Kendall τ-b.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Spearman,
    Kendall,
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationKind::Spearman => "spearman",
            CorrelationKind::Kendall => "kendall",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub kind: CorrelationKind,
    pub value: f64,
    /// Number of pairs left after dropping NaN entries.
    pub n: usize,
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("NaN removed before ranking")
}

/// Pairs where neither side is NaN, with `-0.0` folded into `0.0`.
fn complete_pairs(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter(|(p, q)| !p.is_nan() && !q.is_nan())
        .map(|(&p, &q)| (p + 0.0, q + 0.0))
        .unzip();
    if x.len() < 3 {
        return Err(Error::invalid(format!(
            "rank correlation needs at least 3 complete pairs, got {}",
            x.len()
        )));
    }
    Ok((x, y))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| cmp(values[i], values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman ρ over the pairs where both entries are defined (not NaN).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    let (x, y) = complete_pairs(a, b)?;
    let value = pearson(&average_ranks(&x), &average_ranks(&y))
        .ok_or_else(|| Error::Degenerate("constant input; rank correlation undefined".into()))?;
    Ok(RankCorrelation {
        kind: CorrelationKind::Spearman,
        value,
        n: x.len(),
    })
}

/// Pairs tied within each run of equal values of a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions (pairs out of order).
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Integer pieces of τ-b: `(concordant - discordant, n0 - ties_a, n0 - ties_b)`.
fn kendall_counts(x: &[f64], y: &[f64]) -> (i64, u64, u64) {
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| cmp(x[i], x[j]).then(cmp(y[i], y[j])));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let pairs: Vec<(f64, f64)> = order.iter().map(|&i| (x[i], y[i])).collect();
    let ties_x = tied_pairs(&xs);
    let ties_xy = tied_pairs(&pairs);
    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = count_inversions(&mut ys, &mut buf);
    let ties_y = tied_pairs(&ys);
    let diff = n0 as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * discordant as i64;
    (diff, n0 - ties_x, n0 - ties_y)
}

/// Kendall τ-b over the pairs where both entries are defined, in
/// `O(n log n)`.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    let (x, y) = complete_pairs(a, b)?;
    let (diff, dx, dy) = kendall_counts(&x, &y);
    if dx == 0 || dy == 0 {
        return Err(Error::Degenerate("constant input; rank correlation undefined".into()));
    }
    Ok(RankCorrelation {
        kind: CorrelationKind::Kendall,
        value: (diff as f64 / ((dx * dy) as f64).sqrt()).clamp(-1.0, 1.0),
        n: x.len(),
    })
}

pub fn correlate(kind: CorrelationKind, a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    match kind {
        CorrelationKind::Spearman => spearman(a, b),
        CorrelationKind::Kendall => kendall(a, b),
    }
}
