//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn benchmark_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.toml")
}

/// Holdout accuracy straight from the definition: over the runs that left
/// `j` out, the fraction that classified it correctly.
pub fn holdout_oracle(mask: &[Vec<bool>], loss: &[Vec<bool>]) -> Vec<Option<f64>> {
    let n = mask.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| {
            let mut held = 0u32;
            let mut correct = 0u32;
            for (m, l) in mask.iter().zip(loss) {
                if !m[j] {
                    held += 1;
                    if !l[j] {
                        correct += 1;
                    }
                }
            }
            (held > 0).then(|| f64::from(correct) / f64::from(held))
        })
        .collect()
}

/// Uniform random `k × n` mask with a common row sum, and an arbitrary loss matrix.
pub fn random_mask_loss(rng: &mut impl Rng, k: usize, n: usize) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let size = rng.random_range(1..=n);
    let mask = (0..k)
        .map(|_| {
            let chosen = rand::seq::index::sample(rng, n, size);
            let mut row = vec![false; n];
            for j in chosen {
                row[j] = true;
            }
            row
        })
        .collect();
    let loss = (0..k).map(|_| (0..n).map(|_| rng.random_bool(0.4)).collect()).collect();
    (mask, loss)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Local outlier factor with every neighbor tied at the k-distance included.
pub fn lof_oracle(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let d = |i: usize, j: usize| euclid(&points[i], &points[j]);
    let kdist: Vec<f64> = (0..n)
        .map(|p| {
            let mut ds: Vec<f64> = (0..n).filter(|&o| o != p).map(|o| d(p, o)).collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        })
        .collect();
    let hood: Vec<Vec<usize>> = (0..n)
        .map(|p| (0..n).filter(|&o| o != p && d(p, o) <= kdist[p]).collect())
        .collect();
    let lrd: Vec<f64> = (0..n)
        .map(|p| {
            let mut reach = 0.0;
            for &o in &hood[p] {
                reach += f64::max(kdist[o], d(p, o));
            }
            if reach == 0.0 {
                f64::INFINITY
            } else {
                hood[p].len() as f64 / reach
            }
        })
        .collect();
    (0..n)
        .map(|p| {
            if lrd[p] == f64::INFINITY {
                return 1.0;
            }
            let mut s = 0.0;
            for &o in &hood[p] {
                s += lrd[o];
            }
            s / (hood[p].len() as f64 * lrd[p])
        })
        .collect()
}

/// Kendall τ-b from all pairs.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = (x[i] - x[j]).partial_cmp(&0.0).unwrap();
            let b = (y[i] - y[j]).partial_cmp(&0.0).unwrap();
            use std::cmp::Ordering::Equal;
            if a == Equal {
                tx += 1;
            }
            if b == Equal {
                ty += 1;
            }
            if a != Equal && b != Equal {
                if a == b {
                    conc += 1;
                } else {
                    disc += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (conc - disc) as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt()
}

/// Small-integer coordinates so that duplicate points and distance ties are common.
pub fn grid_points(rng: &mut impl Rng, n: usize, dim: usize, span: i32) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| f64::from(rng.random_range(0..=span))).collect())
        .collect()
}

pub fn flatten(points: &[Vec<f64>]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}
