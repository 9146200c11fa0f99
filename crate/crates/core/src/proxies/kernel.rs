//! RBF kernel-density proxies.
//!
//! With `K(x, x') = exp(-‖x - x'‖² / h²)` and sums over all `N` points
//! (the point itself included, so every density is at least `1/N`):
//!
//! - `C(x)      = (1/N) Σᵢ K(xᵢ, x)`
//! - `C_L(x,y)  = (1/N) Σᵢ 1[y = yᵢ] K(xᵢ, x)`
//! - `C±L(x,y)  = (1/N) Σᵢ (2·1[y = yᵢ] - 1) K(xᵢ, x)`
//!
//! Forming all pairwise kernels costs `O(N²·d)` time.

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

use super::{distance, squared_distance, Orientation, PointSet, ProxyKind, ProxyScores};

pub const DEFAULT_BANDWIDTH_CAP: usize = 2000;

/// Half the mean pairwise Euclidean distance. Above `cap` points the mean is
/// taken over a seeded uniform sample of `cap` points.
pub fn rbf_bandwidth(points: &PointSet, cap: usize, seed: u64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("bandwidth needs at least two points"));
    }
    let cap = cap.max(2);
    let chosen: Vec<usize> = if points.len() > cap {
        let mut idx = sample(&mut seed::rng(seed), points.len(), cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..points.len()).collect()
    };
    let m = chosen.len();
    let row_sums: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|a| {
            let pa = points.row(chosen[a]);
            chosen[a + 1..].iter().map(|&b| distance(pa, points.row(b))).sum()
        })
        .collect();
    let pairs = (m * (m - 1) / 2) as f64;
    let h = 0.5 * row_sums.iter().sum::<f64>() / pairs;
    if h == 0.0 {
        return Err(Error::Degenerate("all points coincide; bandwidth is zero".into()));
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelScores {
    pub plain: Vec<f64>,
    pub same_class: Vec<f64>,
    pub signed: Vec<f64>,
}

impl KernelScores {
    pub fn proxy(&self, kind: ProxyKind, space: super::Space) -> Option<ProxyScores> {
        let scores = match kind {
            ProxyKind::CPlain => &self.plain,
            ProxyKind::CL => &self.same_class,
            ProxyKind::CPmL => &self.signed,
            _ => return None,
        };
        Some(ProxyScores {
            kind,
            space: Some(space),
            indices: (0..scores.len()).collect(),
            scores: scores.clone(),
            orientation: Orientation::Identity,
        })
    }
}

pub fn kernel_scores(points: &PointSet, bandwidth: f64) -> Result<KernelScores> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth {bandwidth} must be > 0")));
    }
    let n = points.len();
    let inv_h2 = 1.0 / (bandwidth * bandwidth);
    let labels = points.labels();
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = points.row(j);
            let y = labels[j];
            let (mut plain, mut same, mut signed) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let k = (-squared_distance(points.row(i), x) * inv_h2).exp();
                plain += k;
                if labels[i] == y {
                    same += k;
                    signed += k;
                } else {
                    signed -= k;
                }
            }
            (plain / n as f64, same / n as f64, signed / n as f64)
        })
        .collect();
    Ok(KernelScores {
        plain: rows.iter().map(|r| r.0).collect(),
        same_class: rows.iter().map(|r| r.1).collect(),
        signed: rows.iter().map(|r| r.2).collect(),
    })
}
