//! Gene superset autoencoder.
//!
//! A gene-set-masked autoencoder whose first hidden layer has one node per
//! gene set (connected only to that set's member genes) and whose latent
//! "superset" layer learns weighted combinations of gene sets. Around the
//! network sit the analyses that make the latent layer interpretable:
//! gene-set de-duplication, shifted Mann-Whitney screens, median-split
//! log-rank screens, train/test reproducibility and subtype classification.
//!
//! The numeric core ([`netcore`], t-SNE) is generic over the floating point
//! type through [`Scalar`]; the aliases below pin the two supported widths.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod genesets;
pub mod netcore;
pub mod pipelines;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use dataio::{ClinicalRecord, ClinicalTable, ExpressionMatrix, GeneSet};
pub use genesets::{GeneSetCollection, MembershipMask};
pub use netcore::{Activation, Head, Layer, LayerKind, Model, TrainConfig, TrainHistory};

/// Double precision network, the default everywhere.
pub type Model64 = Model<f64>;
/// Single precision network, selected with `--float32`.
pub type Model32 = Model<f32>;
pub type Layer64 = Layer<f64>;
pub type Layer32 = Layer<f32>;
pub type Pca64 = netcore::pca::Pca<f64>;
pub type Pca32 = netcore::pca::Pca<f32>;
