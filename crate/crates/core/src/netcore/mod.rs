//! The neural engine: masked and dense layers, hand-written
//! backpropagation, momentum SGD with early stopping, the PCA baseline and
//! stratified cross-validation.

pub mod cv;
mod layer;
mod model;
mod optim;
pub mod pca;
mod persist;
mod train;

use serde::{Deserialize, Serialize};

pub use cv::{kfold_cv, stratified_folds, CvReport};
pub use layer::{he_uniform_bound, Layer, LayerMask};
pub use model::{argmax_columns, one_hot, Encoded, Gradients, Model};
pub use optim::{sgd_step, OptimizerState, TrainConfig};
pub use persist::{AnyModel, MODEL_FORMAT_VERSION};
pub use train::{run_epochs, train, EarlyStopping, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Gene -> gene-set layer; connections restricted by a membership mask.
    Masked,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    /// Column-wise, shift-stabilized. Final classifier layer only.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Autoencoder; mean squared error against the input.
    Reconstruction,
    /// Softmax output; categorical cross-entropy against one-hot labels.
    Classification,
}
