use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::loss;
use super::{sgd_step, Head, Model, OptimizerState, TrainConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Stops after `patience` consecutive epochs without a validation loss
/// below `best - min_delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub best: f64,
    pub best_epoch: usize,
    pub wait: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
            epoch: 0,
        }
    }

    /// Records one epoch's validation loss; `true` means stop now.
    pub fn update(&mut self, val_loss: f64) -> bool {
        self.epoch += 1;
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_early: bool,
    pub iterations: u64,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{t},{v}\n", i + 1));
        }
        out
    }
}

/// Trains `model` in place.
///
/// `x` is `[in_dim, n_samples]`. Autoencoders reconstruct `x`; classifiers
/// need `targets` as `[n_classes, n_samples]` one-hot columns. A seeded
/// shuffle holds out `val_fraction` of the samples for early stopping. The
/// model keeps the parameters of the final epoch.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    x: ArrayView2<T>,
    targets: Option<ArrayView2<T>>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let n = x.ncols();
    let targets = match (model.head, targets) {
        (Head::Reconstruction, None) => x,
        (Head::Reconstruction, Some(_)) => {
            return Err(Error::Config(
                "autoencoder targets are its inputs; labels not accepted".into(),
            ))
        }
        (Head::Classification, Some(t)) => t,
        (Head::Classification, None) => {
            return Err(Error::Config("classifier training needs labels".into()))
        }
    };
    if targets.ncols() != n || targets.nrows() != model.out_dim() {
        return Err(Error::Shape(format!(
            "targets are {:?}, expected ({}, {n})",
            targets.dim(),
            model.out_dim()
        )));
    }
    let n_val = (n as f64 * config.val_fraction).round() as usize;
    if n_val < 2 {
        return Err(Error::Config(format!(
            "validation split of {} from {n} samples leaves {n_val} (< 2) validation samples",
            config.val_fraction
        )));
    }
    if n_val >= n {
        return Err(Error::Config(
            "validation split leaves no training samples".into(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(config.seed, rng::streams::SPLIT));
    let (train_idx, val_idx) = order.split_at(n - n_val);
    let mut train_idx = train_idx.to_vec();
    let val_x = x.select(Axis(1), val_idx);
    let val_t = targets.select(Axis(1), val_idx);

    let mut shuffle_rng = rng::stream(config.seed, rng::streams::SHUFFLE);
    let mut state = OptimizerState::new(model);
    let mut history = run_epochs(config, |epoch| {
        train_idx.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in train_idx.chunks(config.batch_size).enumerate() {
            let bx = x.select(Axis(1), batch);
            let bt = targets.select(Axis(1), batch);
            let acts = model.forward(bx.view())?;
            let batch_loss = loss(model.head, acts.last().unwrap(), bt.view());
            let grads = model.backward(&acts, bt.view())?;
            sgd_step(model, &mut state, &grads, config).map_err(|e| match e {
                Error::NonFinite { layer, .. } => Error::NonFinite {
                    epoch,
                    batch: batch_no,
                    layer,
                },
                e => e,
            })?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: batch_no,
                    layer: model.layers.len() - 1,
                });
            }
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let val_loss = evaluate(model, val_x.view(), val_t.view())?;
        Ok((epoch_loss / train_idx.len() as f64, val_loss))
    })?;
    history.iterations = state.iterations;
    model.config = config.clone();
    Ok(history)
}

/// Runs `epoch(1), epoch(2), ...` until early stopping triggers or
/// `max_epochs` is reached. Each call returns `(train_loss, val_loss)`.
pub fn run_epochs<F>(config: &TrainConfig, mut epoch: F) -> Result<TrainHistory>
where
    F: FnMut(usize) -> Result<(f64, f64)>,
{
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut history = TrainHistory::default();
    for e in 1..=config.max_epochs {
        let (train_loss, val_loss) = epoch(e)?;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        log::debug!("epoch {e}: train {train_loss:.6} val {val_loss:.6}");
        if stopper.update(val_loss) {
            history.stopped_early = e < config.max_epochs;
            break;
        }
    }
    Ok(history)
}

fn evaluate<T: Scalar>(model: &Model<T>, x: ArrayView2<T>, t: ArrayView2<T>) -> Result<f64> {
    let pred: Array2<T> = model.predict(x)?;
    Ok(loss(model.head, &pred, t))
}
