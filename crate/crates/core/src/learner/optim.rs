use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Gradients, Layer, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_true")]
    pub nesterov: bool,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// L2 penalty added to weight gradients (biases are not decayed).
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives epoch shuffling.
    #[serde(default)]
    pub seed: u64,
}

impl OptimizerConfig {
    /// Nesterov SGD with momentum 0.9.
    pub fn sgd(learning_rate: f64, batch_size: usize, epochs: usize) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate,
            momentum: 0.9,
            nesterov: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            batch_size,
            epochs,
            seed: 0,
        }
    }

    pub fn adam(learning_rate: f64, batch_size: usize, epochs: usize) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            ..Self::sgd(learning_rate, batch_size, epochs)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must be in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        Ok(())
    }
}

/// Optimizer state for one model.
pub(crate) struct Optimizer {
    config: OptimizerConfig,
    first: Vec<Layer>,
    second: Vec<Layer>,
    step: i32,
}

fn zeros_like(model: &Model) -> Vec<Layer> {
    model
        .layers()
        .iter()
        .map(|l| Layer {
            weights: Array2::zeros(l.weights.dim()),
            bias: Array1::zeros(l.bias.len()),
        })
        .collect()
}

impl Optimizer {
    pub(crate) fn new(config: &OptimizerConfig, model: &Model) -> Self {
        let second = match config.kind {
            OptimizerKind::Adam => zeros_like(model),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Optimizer {
            config: config.clone(),
            first: zeros_like(model),
            second,
            step: 0,
        }
    }

    pub(crate) fn apply(&mut self, model: &mut Model, mut grads: Gradients, lr: f64) {
        let wd = self.config.weight_decay;
        if wd > 0.0 {
            for (g, p) in grads.iter_mut().zip(model.layers()) {
                g.weights.scaled_add(wd, &p.weights);
            }
        }
        self.step += 1;
        match self.config.kind {
            OptimizerKind::SgdMomentum => {
                let mu = self.config.momentum;
                let nesterov = self.config.nesterov;
                for ((p, g), v) in model.layers_mut().iter_mut().zip(&grads).zip(&mut self.first) {
                    let sgd = |w: &mut f64, &g: &f64, v: &mut f64| {
                        *v = mu * *v + g;
                        let d = if nesterov { g + mu * *v } else { *v };
                        *w -= lr * d;
                    };
                    Zip::from(&mut p.weights).and(&g.weights).and(&mut v.weights).for_each(sgd);
                    Zip::from(&mut p.bias).and(&g.bias).and(&mut v.bias).for_each(sgd);
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
                let c1 = 1.0 - b1.powi(self.step);
                let c2 = 1.0 - b2.powi(self.step);
                for (((p, g), m), v) in model
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    let adam = |w: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    };
                    Zip::from(&mut p.weights)
                        .and(&g.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .for_each(adam);
                    Zip::from(&mut p.bias)
                        .and(&g.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .for_each(adam);
                }
            }
        }
    }
}
