//! Labeled datasets in canonical order.
//!
//! Example order is part of the data contract: every mask matrix, loss matrix,
//! score table and trace is indexed by position in a [`Dataset`].

mod idx;
mod snapshot;
mod synthetic;

pub use idx::{dataset_from_idx, encode_idx, parse_idx, IdxTensor, LABELS_MAGIC, IMAGES_MAGIC};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use synthetic::{
    benchmark_spec, benchmark_spec_with_layout, generate_synthetic, ModeSpec, SyntheticSpec, DENSE_MIN_COUNT,
    SPARSE_MAX_COUNT,
};

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Borrowed view of one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example<'a> {
    pub features: &'a [f32],
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    corruption_mask: Option<Vec<bool>>,
    modes: Option<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from row-major features (`labels.len()` rows of `dim`).
    pub fn new(features: Vec<f32>, dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must contain at least one example"));
        }
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::invalid(format!(
                "label {y} of example {i} is outside [0, {num_classes})"
            )));
        }
        Ok(Dataset {
            features,
            dim,
            labels,
            num_classes,
            corruption_mask: None,
            modes: None,
        })
    }

    pub fn from_examples(examples: &[(Vec<f32>, usize)], num_classes: usize) -> Result<Self> {
        let dim = examples.first().map(|(x, _)| x.len()).unwrap_or(0);
        let mut features = Vec::with_capacity(examples.len() * dim);
        for (i, (x, _)) in examples.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::invalid(format!(
                    "example {i} has dimension {}, expected {dim}",
                    x.len()
                )));
            }
            features.extend_from_slice(x);
        }
        let labels = examples.iter().map(|(_, y)| *y).collect();
        Dataset::new(features, dim, labels, num_classes)
    }

    pub fn with_corruption_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: mask.len(),
            });
        }
        self.corruption_mask = Some(mask);
        Ok(self)
    }

    pub(crate) fn with_modes(mut self, modes: Vec<usize>) -> Self {
        debug_assert_eq!(modes.len(), self.len());
        self.modes = Some(modes);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            features: self.row(i),
            label: self.labels[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Example<'_>> + '_ {
        (0..self.len()).map(move |i| self.example(i))
    }

    pub fn corruption_mask(&self) -> Option<&[bool]> {
        self.corruption_mask.as_deref()
    }

    /// Planted mode id per example, when the dataset came from [`generate_synthetic`].
    pub fn modes(&self) -> Option<&[usize]> {
        self.modes.as_deref()
    }

    /// New dataset holding the given examples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("subset must be nonempty"));
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("index {i} out of range for N={}", self.len())));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            features,
            dim: self.dim,
            labels,
            num_classes: self.num_classes,
            corruption_mask: self
                .corruption_mask
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i]).collect()),
            modes: self.modes.as_ref().map(|m| indices.iter().map(|&i| m[i]).collect()),
        })
    }

    /// Seeded split into (train, test); each part keeps the original relative order.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::invalid(format!("test fraction {test_fraction} not in (0, 1)")));
        }
        let n = self.len();
        let n_test = (test_fraction * n as f64).round_ties_even() as usize;
        if n_test == 0 || n_test == n {
            return Err(Error::invalid("split leaves an empty part"));
        }
        let mut rng = seed::rng(seed);
        let mut is_test = vec![false; n];
        for i in sample(&mut rng, n, n_test) {
            is_test[i] = true;
        }
        let test: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
        let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    /// Flips the labels of `round(γ·N)` uniformly chosen examples (ties to even)
    /// to a uniformly chosen different class and records them in the corruption
    /// mask. A dataset whose mask is present but all false counts as uncorrupted.
    pub fn flip_labels(&self, fraction: f64, seed: u64) -> Result<Dataset> {
        if let Some(mask) = &self.corruption_mask {
            if mask.iter().any(|&m| m) {
                return Err(Error::invalid("dataset already carries label corruption"));
            }
        }
        let (labels, mask) = flip(&self.labels, self.num_classes, fraction, seed)?;
        Ok(Dataset {
            labels,
            corruption_mask: Some(mask),
            ..self.clone()
        })
    }

    /// Count of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

pub(crate) fn flip_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round_ties_even() as usize
}

fn flip(labels: &[usize], num_classes: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<bool>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("flip fraction {fraction} not in [0, 1)")));
    }
    let n = labels.len();
    let count = flip_count(fraction, n);
    let mut out = labels.to_vec();
    let mut mask = vec![false; n];
    if count == 0 {
        return Ok((out, mask));
    }
    if num_classes < 2 {
        return Err(Error::invalid("label flipping needs at least two classes"));
    }
    let mut rng = seed::rng(seed);
    let mut chosen = sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let r = rng.random_range(0..num_classes - 1);
        out[i] = if r >= labels[i] { r + 1 } else { r };
        mask[i] = true;
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, classes: usize) -> Dataset {
        let features = (0..n).map(|i| i as f32).collect();
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::new(features, 1, labels, classes).unwrap()
    }

    #[test]
    fn zero_fraction_is_identity_with_false_mask() {
        let d = toy(10, 3);
        let f = d.flip_labels(0.0, 1).unwrap();
        assert_eq!(f.labels(), d.labels());
        assert_eq!(f.corruption_mask().unwrap(), &[false; 10][..]);
    }

    #[test]
    fn quarter_of_thousand_flipped() {
        let d = toy(1000, 10);
        let f = d.flip_labels(0.25, 3).unwrap();
        let mask = f.corruption_mask().unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 250);
        for i in 0..1000 {
            assert_eq!(mask[i], f.labels()[i] != d.labels()[i]);
        }
        // original untouched
        assert!(d.corruption_mask().is_none());
    }

    #[test]
    fn binary_flip_goes_to_other_class() {
        let d = toy(20, 2);
        let f = d.flip_labels(0.5, 9).unwrap();
        for i in 0..20 {
            if f.corruption_mask().unwrap()[i] {
                assert_eq!(f.labels()[i], 1 - d.labels()[i]);
            }
        }
    }

    #[test]
    fn out_of_range_fraction_rejected() {
        let d = toy(4, 2);
        assert!(d.flip_labels(1.0, 0).is_err());
        assert!(d.flip_labels(-0.1, 0).is_err());
    }

    #[test]
    fn refuses_double_corruption() {
        let d = toy(8, 2).flip_labels(0.25, 0).unwrap();
        assert!(d.flip_labels(0.25, 1).is_err());
    }

    #[test]
    fn rejects_out_of_range_label() {
        assert!(Dataset::new(vec![0.0; 2], 1, vec![0, 2], 2).is_err());
        assert!(Dataset::new(vec![0.0; 3], 1, vec![0, 1], 2).is_err());
    }

    #[test]
    fn split_preserves_order_and_sizes() {
        let d = toy(50, 2);
        let (train, test) = d.split(0.2, 4).unwrap();
        assert_eq!(train.len(), 40);
        assert_eq!(test.len(), 10);
        let xs: Vec<f32> = train.features().to_vec();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }
}
