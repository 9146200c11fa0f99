use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::seed;

/// Row-major 0/1 matrix, runs × examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryMatrix {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        Ok(BinaryMatrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [bool] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        BinaryMatrix {
            rows: rows.len(),
            cols: self.cols,
            data: rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
        }
    }
}

/// `M[i][j]` is set iff example `j` was in run `i`'s training subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    pub matrix: BinaryMatrix,
    pub subset_size: usize,
}

/// `L[i][j]` is set iff run `i` misclassified example `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossMatrix {
    pub matrix: BinaryMatrix,
}

impl MaskMatrix {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let matrix = BinaryMatrix::from_rows(rows)?;
        let subset_size = if matrix.rows() == 0 {
            0
        } else {
            matrix.row(0).iter().filter(|&&b| b).count()
        };
        for r in 0..matrix.rows() {
            if matrix.row(r).iter().filter(|&&b| b).count() != subset_size {
                return Err(Error::invalid(format!("mask row {r} does not sum to {subset_size}")));
            }
        }
        Ok(MaskMatrix { matrix, subset_size })
    }

    pub fn runs(&self) -> usize {
        self.matrix.rows()
    }

    pub fn examples(&self) -> usize {
        self.matrix.cols()
    }

    /// Training indices of run `r`, ascending.
    pub fn subset(&self, r: usize) -> Vec<usize> {
        self.matrix
            .row(r)
            .iter()
            .enumerate()
            .filter_map(|(j, &m)| m.then_some(j))
            .collect()
    }
}

impl LossMatrix {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        Ok(LossMatrix {
            matrix: BinaryMatrix::from_rows(rows)?,
        })
    }
}

/// Seed of run `i` for a batch seeded with `seed`.
pub(crate) fn run_seed(seed: u64, run: usize) -> u64 {
    seed::derive(seed, run as u64)
}

pub(crate) fn sample_row(n_total: usize, n: usize, run_seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive_named(run_seed, "subset"));
    let mut idx = sample(&mut rng, n_total, n).into_vec();
    idx.sort_unstable();
    idx
}

/// `k` independent uniform size-`n` subsets of `0..N`; row `i` depends only on
/// `(seed, i)`.
pub fn sample_subsets(n_total: usize, n: usize, k: usize, seed: u64) -> Result<MaskMatrix> {
    if n == 0 || n > n_total {
        return Err(Error::invalid(format!("subset size {n} not in [1, {n_total}]")));
    }
    if k == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    let mut matrix = BinaryMatrix::zeros(k, n_total);
    for i in 0..k {
        let row = matrix.row_mut(i);
        for j in sample_row(n_total, n, run_seed(seed, i)) {
            row[j] = true;
        }
    }
    Ok(MaskMatrix { matrix, subset_size: n })
}

/// Holdout accuracy per example: correct held-out runs over held-out runs,
/// `None` when no run held the example out.
pub fn aggregate_scores(mask: &MaskMatrix, loss: &LossMatrix) -> Result<Vec<Option<f64>>> {
    let (m, l) = (&mask.matrix, &loss.matrix);
    if m.rows() != l.rows() || m.cols() != l.cols() {
        return Err(Error::invalid(format!(
            "mask is {}x{} but loss is {}x{}",
            m.rows(),
            m.cols(),
            l.rows(),
            l.cols()
        )));
    }
    let mut held = vec![0u32; m.cols()];
    let mut correct = vec![0u32; m.cols()];
    for i in 0..m.rows() {
        for (j, (&in_train, &wrong)) in m.row(i).iter().zip(l.row(i)).enumerate() {
            if !in_train {
                held[j] += 1;
                if !wrong {
                    correct[j] += 1;
                }
            }
        }
    }
    Ok(held
        .into_iter()
        .zip(correct)
        .map(|(h, c)| (h > 0).then(|| f64::from(c) / f64::from(h)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[&[u8]]) -> Vec<Vec<bool>> {
        v.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect()
    }

    #[test]
    fn hand_executed_example() {
        // rows sum to different sizes, so build the matrix without the row-sum check
        let mask = MaskMatrix {
            matrix: BinaryMatrix::from_rows(rows(&[&[1, 0, 1], &[0, 1, 0]])).unwrap(),
            subset_size: 2,
        };
        let loss = LossMatrix::from_rows(rows(&[&[0, 1, 0], &[0, 0, 1]])).unwrap();
        assert_eq!(aggregate_scores(&mask, &loss).unwrap(), vec![Some(1.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn zero_loss_gives_ones_and_never_held_out_gives_none() {
        let mask = MaskMatrix::from_rows(rows(&[&[1, 0, 0], &[1, 1, 0]])).unwrap_err();
        let _ = mask;
        let mask = MaskMatrix::from_rows(rows(&[&[1, 0, 0], &[1, 0, 0]])).unwrap();
        let loss = LossMatrix::from_rows(rows(&[&[0, 0, 0], &[0, 0, 0]])).unwrap();
        assert_eq!(aggregate_scores(&mask, &loss).unwrap(), vec![None, Some(1.0), Some(1.0)]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mask = MaskMatrix::from_rows(rows(&[&[1, 0]])).unwrap();
        let loss = LossMatrix::from_rows(rows(&[&[0, 0, 0]])).unwrap();
        assert!(aggregate_scores(&mask, &loss).is_err());
    }

    #[test]
    fn full_subsets_are_all_ones() {
        let m = sample_subsets(6, 6, 3, 1).unwrap();
        assert!((0..3).all(|r| m.matrix.row(r).iter().all(|&b| b)));
    }

    #[test]
    fn row_sums_and_determinism() {
        let a = sample_subsets(50, 17, 20, 9).unwrap();
        for r in 0..20 {
            assert_eq!(a.matrix.row(r).iter().filter(|&&b| b).count(), 17);
        }
        assert_eq!(a, sample_subsets(50, 17, 20, 9).unwrap());
        // adding runs keeps earlier rows
        let b = sample_subsets(50, 17, 25, 9).unwrap();
        assert_eq!(a.matrix.row(19), b.matrix.row(19));
    }

    #[test]
    fn oversized_subset_rejected() {
        assert!(sample_subsets(4, 5, 1, 0).is_err());
        assert!(sample_subsets(4, 0, 1, 0).is_err());
    }
}
