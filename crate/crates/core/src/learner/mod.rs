//! A small deterministic multilayer perceptron trainer.
//!
//! Hidden layers use the rectifier, the output is a softmax over classes and
//! training minimizes mean softmax cross-entropy. All arithmetic is `f64`;
//! parameters are only narrowed to `f32` in checkpoint files.

mod checkpoint;
mod optim;
mod schedule;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use optim::{OptimizerConfig, OptimizerKind};
pub use schedule::ScheduleSpec;
pub use train::{read_trace_csv, train, write_trace_csv, EpochStats, TrainingTrace};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl ArchSpec {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Result<Self> {
        let arch = ArchSpec { input, hidden, output };
        arch.validate()?;
        Ok(arch)
    }

    /// The MNIST-scale architecture, MLP(512, 256, C).
    pub fn mlp_512_256(input: usize, output: usize) -> Self {
        ArchSpec {
            input,
            hidden: vec![512, 256],
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::invalid("architecture needs at least one hidden layer"));
        }
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    /// (fan_in, fan_out) per affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// fan_in × fan_out
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: ArchSpec,
    layers: Vec<Layer>,
}

/// Per-layer gradients, shaped like [`Model::layers`].
pub type Gradients = Vec<Layer>;

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    /// rows × classes, each row sums to one.
    pub probabilities: Array2<f64>,
}

/// Weights uniform on `±sqrt(6 / fan_in)`, biases zero.
pub fn init_model(arch: &ArchSpec, seed: u64) -> Result<Model> {
    arch.validate()?;
    let mut rng = seed::rng(seed);
    let layers = arch
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
            Layer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(Model {
        arch: arch.clone(),
        layers,
    })
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const CHUNK: usize = 512;

impl Model {
    pub fn from_layers(arch: ArchSpec, layers: Vec<Layer>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for (&(i, o), layer) in shapes.iter().zip(&layers) {
            if layer.weights.dim() != (i, o) || layer.bias.len() != o {
                return Err(Error::invalid(format!(
                    "layer shape {:?}/{} does not match ({i}, {o})",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
        }
        Ok(Model { arch, layers })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_dim(&self, features: &[f32], dim: usize) -> Result<usize> {
        if dim != self.arch.input {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input,
                actual: dim,
            });
        }
        if features.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "feature buffer of length {} is not a multiple of {dim}",
                features.len()
            )));
        }
        Ok(features.len() / dim)
    }

    /// Hidden activations of every layer, then the logits.
    fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut outs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { outs[l - 1].view() };
            let mut z = input.dot(&layer.weights);
            z += &layer.bias;
            if l + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            outs.push(z);
        }
        outs
    }

    fn logits_to_predictions(mut logits: Array2<f64>) -> (Vec<usize>, Array2<f64>) {
        let mut labels = Vec::with_capacity(logits.nrows());
        for mut row in logits.axis_iter_mut(Axis(0)) {
            let slice = row.as_slice_mut().expect("standard layout");
            softmax_in_place(slice);
            labels.push(argmax(slice));
        }
        (labels, logits)
    }

    /// Class probabilities and argmax labels for row-major `features`.
    pub fn predict(&self, features: &[f32], dim: usize) -> Result<Predictions> {
        let rows = self.check_dim(features, dim)?;
        let mut labels = Vec::with_capacity(rows);
        let mut probabilities = Array2::zeros((rows, self.arch.output));
        for start in (0..rows).step_by(CHUNK) {
            let end = (start + CHUNK).min(rows);
            let x = to_matrix(&features[start * dim..end * dim], dim);
            let mut outs = self.forward(x.view());
            let (l, p) = Self::logits_to_predictions(outs.pop().expect("at least one layer"));
            labels.extend(l);
            probabilities.slice_mut(ndarray::s![start..end, ..]).assign(&p);
        }
        Ok(Predictions { labels, probabilities })
    }

    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Predictions> {
        self.predict(dataset.features(), dataset.dim())
    }

    /// Post-activation outputs of the last hidden layer.
    pub fn penultimate(&self, features: &[f32], dim: usize) -> Result<Array2<f64>> {
        let rows = self.check_dim(features, dim)?;
        let width = *self.arch.hidden.last().expect("validated");
        let mut out = Array2::zeros((rows, width));
        for start in (0..rows).step_by(CHUNK) {
            let end = (start + CHUNK).min(rows);
            let x = to_matrix(&features[start * dim..end * dim], dim);
            let mut outs = self.forward(x.view());
            outs.pop();
            out.slice_mut(ndarray::s![start..end, ..])
                .assign(&outs.pop().expect("at least one hidden layer"));
        }
        Ok(out)
    }

    /// Mean softmax cross-entropy over the rows of `x` and its exact gradient.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, labels: &[usize]) -> (f64, Gradients) {
        let b = x.nrows();
        let outs = self.forward(x);
        let mut delta = outs.last().expect("at least one layer").clone();
        let mut loss = 0.0;
        for (mut row, &y) in delta.axis_iter_mut(Axis(0)).zip(labels) {
            let slice = row.as_slice_mut().expect("standard layout");
            let max = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + slice.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - slice[y];
            softmax_in_place(slice);
            slice[y] -= 1.0;
        }
        let scale = 1.0 / b as f64;
        delta.mapv_inplace(|v| v * scale);

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x } else { outs[l - 1].view() };
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                ndarray::Zip::from(&mut back)
                    .and(&outs[l - 1])
                    .for_each(|g, &a| {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    });
                delta = back;
            }
            grads.push(Layer { weights: gw, bias: gb });
        }
        grads.reverse();
        (loss * scale, grads)
    }
}

pub(crate) fn to_matrix(features: &[f32], dim: usize) -> Array2<f64> {
    let rows = features.len() / dim;
    Array2::from_shape_fn((rows, dim), |(r, c)| f64::from(features[r * dim + c]))
}

pub(crate) fn gather_rows(dataset: &Dataset, indices: &[usize]) -> Array2<f64> {
    let dim = dataset.dim();
    Array2::from_shape_fn((indices.len(), dim), |(r, c)| f64::from(dataset.row(indices[r])[c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn arch() -> ArchSpec {
        ArchSpec::new(3, vec![5, 4], 3).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = init_model(&arch(), 1).unwrap();
        let b = init_model(&arch(), 1).unwrap();
        assert_eq!(a, b);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        let c = init_model(&arch(), 2).unwrap();
        assert_ne!(a.layers()[0].weights, c.layers()[0].weights);
    }

    #[test]
    fn arch_needs_hidden_layer() {
        assert!(ArchSpec::new(2, vec![], 2).is_err());
        assert!(ArchSpec::new(2, vec![0], 2).is_err());
    }

    #[test]
    fn probabilities_normalized() {
        let m = init_model(&arch(), 3).unwrap();
        let x: Vec<f32> = (0..30).map(|i| (i as f32 * 0.37).sin() * 3.0).collect();
        let p = m.predict(&x, 3).unwrap();
        for row in p.probabilities.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        assert_eq!(p.labels.len(), 10);
    }

    #[test]
    fn zero_model_is_uniform() {
        let mut m = init_model(&arch(), 3).unwrap();
        for l in m.layers_mut() {
            l.weights.fill(0.0);
        }
        let p = m.predict(&[1.0, 2.0, 3.0], 3).unwrap();
        for &v in p.probabilities.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(p.labels, vec![0]);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let arch = ArchSpec::new(1, vec![1], 2).unwrap();
        let m = Model::from_layers(
            arch,
            vec![
                Layer {
                    weights: array![[1.0]],
                    bias: array![0.0],
                },
                Layer {
                    weights: array![[1000.0, 0.0]],
                    bias: array![0.0, 0.0],
                },
            ],
        )
        .unwrap();
        let p = m.predict(&[1.0], 1).unwrap();
        // log-sum-exp of [1000, 0] is 1000 + ln(1 + e^-1000)
        let lse = 1000.0 + (-1000.0f64).exp().ln_1p();
        assert!((p.probabilities[[0, 0]] - (1000.0 - lse).exp()).abs() < 1e-12);
        assert!((p.probabilities[[0, 1]] - (0.0 - lse).exp()).abs() < 1e-12);
        assert!(p.probabilities.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = init_model(&arch(), 0).unwrap();
        assert!(matches!(m.predict(&[0.0; 4], 2), Err(Error::DimensionMismatch { .. })));
        assert!(m.predict(&[0.0; 4], 3).is_err());
    }

    #[test]
    fn penultimate_shape_and_range() {
        let m = init_model(&arch(), 4).unwrap();
        let x = [0.3, -1.0, 2.0, 0.3, -1.0, 2.0, 5.0, 5.0, -5.0];
        let h = m.penultimate(&x, 3).unwrap();
        assert_eq!(h.dim(), (3, 4));
        assert!(h.iter().all(|&v| v >= 0.0));
        assert_eq!(h.row(0), h.row(1));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}

/// Everything needed to train one fresh model: hidden widths, optimizer and
/// schedule. Input and output widths come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: ScheduleSpec,
}

impl TrainerConfig {
    /// The desk-scale default: MLP with hidden widths (64, 32), Nesterov SGD
    /// with base rate 0.05 under ∧(15%), batch 16, 100 epochs.
    pub fn desk_default() -> Self {
        TrainerConfig {
            hidden: vec![64, 32],
            optimizer: OptimizerConfig::sgd(0.05, 16, 100),
            schedule: ScheduleSpec::triangular_15(),
        }
    }

    /// Default for the traced full-data run behind learning-speed proxies:
    /// the desk architecture at rate 0.02, batch 32, weight decay 0.03, 20 epochs.
    pub fn proxy_default() -> Self {
        let mut optimizer = OptimizerConfig::sgd(0.02, 32, 20);
        optimizer.weight_decay = 0.03;
        TrainerConfig {
            hidden: vec![64, 32],
            optimizer,
            schedule: ScheduleSpec::triangular_15(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("trainer needs at least one positive hidden width"));
        }
        self.optimizer.validate()?;
        self.schedule.validate()
    }

    pub fn arch_for(&self, dataset: &Dataset) -> ArchSpec {
        ArchSpec {
            input: dataset.dim(),
            hidden: self.hidden.clone(),
            output: dataset.num_classes(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form (the seed field excluded).
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canonical = self.clone();
        canonical.optimizer.seed = 0;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Initializes from `derive_named(run_seed, "init")`, shuffles with
    /// `derive_named(run_seed, "shuffle")` and trains on `train_indices`.
    pub fn fit(
        &self,
        dataset: &Dataset,
        train_indices: &[usize],
        run_seed: u64,
        eval_indices: Option<&[usize]>,
    ) -> Result<(Model, TrainingTrace)> {
        let model = init_model(&self.arch_for(dataset), seed::derive_named(run_seed, "init"))?;
        let opt = self
            .optimizer
            .clone()
            .with_seed(seed::derive_named(run_seed, "shuffle"));
        train(model, dataset, train_indices, &opt, &self.schedule, eval_indices)
    }
}
