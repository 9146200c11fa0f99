//! Gaussian-mixture benchmarks with planted regularity structure.
//!
//! Each class is a list of isotropic Gaussian modes. Heavily populated modes
//! play the role of regular examples; modes with a handful of members are the
//! irregular tail. An optional fraction of labels is then flipped.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

use super::{flip, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub mean: Vec<f64>,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// `classes[c]` lists the modes of class `c`.
    pub classes: Vec<Vec<ModeSpec>>,
    #[serde(default)]
    pub flip_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("synthetic spec has no classes"));
        }
        let dim = self
            .classes
            .iter()
            .flatten()
            .map(|m| m.mean.len())
            .next()
            .ok_or_else(|| Error::invalid("synthetic spec has no modes"))?;
        if dim == 0 {
            return Err(Error::invalid("mode means must have positive dimension"));
        }
        for (c, modes) in self.classes.iter().enumerate() {
            for (m, mode) in modes.iter().enumerate() {
                if mode.mean.len() != dim {
                    return Err(Error::invalid(format!(
                        "class {c} mode {m}: mean has dimension {}, expected {dim}",
                        mode.mean.len()
                    )));
                }
                if !(mode.std.is_finite() && mode.std >= 0.0) {
                    return Err(Error::invalid(format!("class {c} mode {m}: std must be finite and >= 0")));
                }
                if mode.mean.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("class {c} mode {m}: mean must be finite")));
                }
            }
        }
        if self.total() == 0 {
            return Err(Error::invalid("synthetic spec needs at least one nonempty mode"));
        }
        if !(0.0..1.0).contains(&self.flip_fraction) {
            return Err(Error::invalid(format!(
                "flip fraction {} not in [0, 1)",
                self.flip_fraction
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.classes.iter().flatten().map(|m| m.count).sum()
    }

    /// Population counts of all modes in generation order (the mode ids used
    /// by [`Dataset::modes`]).
    pub fn mode_counts(&self) -> Vec<usize> {
        self.classes.iter().flatten().map(|m| m.count).collect()
    }
}

/// Samples every mode in class-major order, then flips labels.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let dim = spec.classes.iter().flatten().next().map_or(0, |m| m.mean.len());
    let n = spec.total();
    let mut rng = seed::rng(seed::derive_named(spec.seed, "samples"));
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    let mut mode_id = 0;
    for (class, class_modes) in spec.classes.iter().enumerate() {
        for mode in class_modes {
            for _ in 0..mode.count {
                for &mu in &mode.mean {
                    let z: f64 = rng.sample(StandardNormal);
                    features.push((mu + mode.std * z) as f32);
                }
                labels.push(class);
                modes.push(mode_id);
            }
            mode_id += 1;
        }
    }
    let (labels, mask) = flip(
        &labels,
        spec.classes.len(),
        spec.flip_fraction,
        seed::derive_named(spec.seed, "flips"),
    )?;
    Ok(Dataset::new(features, dim, labels, spec.classes.len())?
        .with_corruption_mask(mask)?
        .with_modes(modes))
}

/// Mode population at or above which a benchmark mode counts as dense.
pub const DENSE_MIN_COUNT: usize = 50;
/// Mode population at or below which a benchmark mode counts as sparse.
pub const SPARSE_MAX_COUNT: usize = 10;

const BENCHMARK_DENSE_OFFSET: f64 = 5.0;
const BENCHMARK_FOREIGN_CLEARANCE: f64 = 4.0;

/// The desk-scale benchmark: 3 classes in 8 dimensions, 600 examples.
///
/// Per class: one dense mode of 80 points centred at `5·e_c` (std 1), five
/// mid-size modes of 20 and four sparse modes of 5 at seeded random centres
/// (`3·N(0, I)`, std 0.6). A centre is redrawn until it lies at least 4 from
/// every centre of another class placed before it. Mode centres depend only
/// on `layout_seed`; samples and flips depend on `seed`.
pub fn benchmark_spec(flip_fraction: f64, seed: u64) -> SyntheticSpec {
    benchmark_spec_with_layout(flip_fraction, seed, 0x5eed)
}

pub fn benchmark_spec_with_layout(flip_fraction: f64, seed: u64, layout_seed: u64) -> SyntheticSpec {
    const DIM: usize = 8;
    const CLASSES: usize = 3;
    let mut rng = seed::rng(layout_seed);
    // (class, centre) of every placed mode
    let mut placed: Vec<(usize, Vec<f64>)> = (0..CLASSES)
        .map(|c| (c, (0..DIM).map(|j| if j == c { BENCHMARK_DENSE_OFFSET } else { 0.0 }).collect()))
        .collect();
    let mut classes: Vec<Vec<ModeSpec>> = placed
        .iter()
        .map(|(_, mean)| {
            vec![ModeSpec {
                mean: mean.clone(),
                std: 1.0,
                count: 80,
            }]
        })
        .collect();
    for (c, modes) in classes.iter_mut().enumerate() {
        for count in [20, 20, 20, 20, 20, 5, 5, 5, 5] {
            let mean = loop {
                let mean: Vec<f64> = (0..DIM)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        3.0 * z
                    })
                    .collect();
                let clear = placed.iter().filter(|(pc, _)| *pc != c).all(|(_, p)| {
                    mean.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= BENCHMARK_FOREIGN_CLEARANCE
                });
                if clear {
                    break mean;
                }
            };
            placed.push((c, mean.clone()));
            modes.push(ModeSpec {
                mean,
                std: 0.6,
                count,
            });
        }
    }
    SyntheticSpec {
        classes,
        flip_fraction,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_mode(count: usize, flip_fraction: f64) -> SyntheticSpec {
        SyntheticSpec {
            classes: vec![
                vec![ModeSpec {
                    mean: vec![0.0, 1.0],
                    std: 0.5,
                    count,
                }],
                vec![],
            ],
            flip_fraction,
            seed: 11,
        }
    }

    #[test]
    fn single_mode_no_flips() {
        let d = generate_synthetic(&one_mode(5, 0.0)).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.labels().iter().all(|&y| y == 0));
        assert!(d.corruption_mask().unwrap().iter().all(|&m| !m));
    }

    #[test]
    fn quarter_flipped_of_400() {
        let clean = generate_synthetic(&benchmark_spec_clean(400)).unwrap();
        let mut spec = benchmark_spec_clean(400);
        spec.flip_fraction = 0.25;
        let d = generate_synthetic(&spec).unwrap();
        let mask = d.corruption_mask().unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 100);
        for i in 0..d.len() {
            assert_eq!(clean.row(i), d.row(i));
            if mask[i] {
                assert_ne!(d.labels()[i], clean.labels()[i]);
            } else {
                assert_eq!(d.labels()[i], clean.labels()[i]);
            }
        }
    }

    fn benchmark_spec_clean(n: usize) -> SyntheticSpec {
        SyntheticSpec {
            classes: (0..4)
                .map(|c| {
                    vec![ModeSpec {
                        mean: vec![c as f64, 0.0],
                        std: 0.1,
                        count: n / 4,
                    }]
                })
                .collect(),
            flip_fraction: 0.0,
            seed: 5,
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = benchmark_spec(0.1, 3);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = benchmark_spec(0.1, 4);
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_synthetic(&one_mode(0, 0.0)).is_err());
        assert!(generate_synthetic(&one_mode(3, 1.0)).is_err());
        let mut bad = one_mode(3, 0.0);
        bad.classes[1].push(ModeSpec {
            mean: vec![0.0],
            std: 1.0,
            count: 1,
        });
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn benchmark_layout() {
        let spec = benchmark_spec(0.1, 0);
        assert_eq!(spec.total(), 600);
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.num_classes(), 3);
        assert_eq!(d.dim(), 8);
        assert_eq!(d.modes().unwrap().len(), 600);
        assert_eq!(d.corruption_mask().unwrap().iter().filter(|&&m| m).count(), 60);
    }
}
