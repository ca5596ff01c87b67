use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, Model};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Per-batch decay: the step size is `lr / (1 + decay * iterations)`.
    pub decay: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Share of samples held out for early stopping.
    pub val_fraction: f64,
    pub patience: usize,
    /// A validation loss must drop by more than this to count as progress.
    pub min_delta: f64,
    /// Seeds the validation split and the batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            decay: 1e-6,
            momentum: 0.9,
            nesterov: true,
            batch_size: 32,
            max_epochs: 100,
            val_fraction: 0.05,
            patience: 3,
            min_delta: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction {} is not in (0, 1)",
                self.val_fraction
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || self.decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(
                "learning_rate > 0, decay >= 0 and momentum in [0, 1) required".into(),
            ));
        }
        Ok(())
    }
}

/// Momentum buffers, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity_w: Vec<Array2<T>>,
    pub velocity_b: Vec<Array1<T>>,
    /// Number of completed steps (batches).
    pub iterations: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(model: &Model<T>) -> Self {
        OptimizerState {
            velocity_w: model
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect(),
            velocity_b: model
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.dim()))
                .collect(),
            iterations: 0,
        }
    }
}

fn update<T: Scalar, D: ndarray::Dimension>(
    p: &mut ndarray::Array<T, D>,
    v: &mut ndarray::Array<T, D>,
    g: &ndarray::Array<T, D>,
    lr: T,
    momentum: T,
    nesterov: bool,
) {
    Zip::from(p).and(v).and(g).for_each(|p, v, &g| {
        *v = momentum * *v - lr * g;
        if nesterov {
            *p = *p + momentum * *v - lr * g;
        } else {
            *p += *v;
        }
    });
}

/// One SGD step with optional Nesterov momentum and time-based decay.
/// Masked weights are re-zeroed afterwards.
pub fn sgd_step<T: Scalar>(
    model: &mut Model<T>,
    state: &mut OptimizerState<T>,
    grads: &Gradients<T>,
    config: &TrainConfig,
) -> Result<()> {
    if grads.weights.len() != model.layers.len() || grads.biases.len() != model.layers.len() {
        return Err(Error::Shape(
            "gradient count differs from layer count".into(),
        ));
    }
    for (l, (gw, gb)) in grads.weights.iter().zip(&grads.biases).enumerate() {
        if gw.dim() != model.layers[l].weights.dim() || gb.dim() != model.layers[l].bias.dim() {
            return Err(Error::Shape(format!("gradient shape differs at layer {l}")));
        }
        if gw.iter().chain(gb.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                epoch: 0,
                batch: state.iterations as usize,
                layer: l,
            });
        }
    }
    let lr = T::of(config.learning_rate / (1.0 + config.decay * state.iterations as f64));
    let momentum = T::of(config.momentum);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        update(
            &mut layer.weights,
            &mut state.velocity_w[l],
            &grads.weights[l],
            lr,
            momentum,
            config.nesterov,
        );
        update(
            &mut layer.bias,
            &mut state.velocity_b[l],
            &grads.biases[l],
            lr,
            momentum,
            config.nesterov,
        );
        if let Some(mask) = &layer.mask {
            mask.apply(&mut layer.weights);
            mask.apply(&mut state.velocity_w[l]);
        }
    }
    state.iterations += 1;
    Ok(())
}
