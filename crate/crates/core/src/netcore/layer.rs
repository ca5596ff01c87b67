use ndarray::{Array1, Array2, Zip};
use rand::Rng;

use super::{Activation, LayerKind};
use crate::error::{Error, Result};
use crate::genesets::MembershipMask;
use crate::scalar::Scalar;

/// Allowed connections of a masked layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMask<T> {
    /// `columns[j]`: inputs connected to output node `j`, ascending.
    pub columns: Vec<Vec<usize>>,
    /// `[out_dim, in_dim]` ones on allowed connections, zeros elsewhere.
    pub keep: Array2<T>,
}

impl<T: Scalar> LayerMask<T> {
    pub fn new(columns: Vec<Vec<usize>>, in_dim: usize) -> Result<Self> {
        let mut keep = Array2::zeros((columns.len(), in_dim));
        for (j, col) in columns.iter().enumerate() {
            for &i in col {
                if i >= in_dim {
                    return Err(Error::Shape(format!(
                        "mask column {j} references input {i} of {in_dim}"
                    )));
                }
                keep[[j, i]] = T::one();
            }
        }
        Ok(LayerMask { columns, keep })
    }

    /// Sets every off-mask entry to +0.0.
    pub fn apply(&self, m: &mut Array2<T>) {
        Zip::from(m).and(&self.keep).for_each(|w, &k| {
            if k == T::zero() {
                *w = T::zero();
            }
        });
    }
}

/// One fully connected or masked layer: `out = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    pub activation: Activation,
    /// `[out_dim, in_dim]`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub mask: Option<LayerMask<T>>,
}

/// Half-width of the He uniform distribution for `fan_in` inputs.
pub fn he_uniform_bound(fan_in: usize) -> Result<f64> {
    if fan_in == 0 {
        return Err(Error::Init("He initialization needs fan_in >= 1".into()));
    }
    Ok((6.0 / fan_in as f64).sqrt())
}

impl<T: Scalar> Layer<T> {
    /// Zero-initialized dense layer.
    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Layer {
            kind: LayerKind::Dense,
            activation,
            weights: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
            mask: None,
        }
    }

    /// Zero-initialized gene -> gene-set layer.
    pub fn masked(mask: &MembershipMask, activation: Activation) -> Result<Self> {
        Self::masked_from_columns(mask.columns.clone(), mask.n_genes(), activation)
    }

    pub fn masked_from_columns(
        columns: Vec<Vec<usize>>,
        in_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let out_dim = columns.len();
        let mask = LayerMask::new(columns, in_dim)?;
        Ok(Layer {
            kind: LayerKind::Masked,
            activation,
            weights: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
            mask: Some(mask),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Number of trainable (on-mask) weights plus biases.
    pub fn n_params(&self) -> usize {
        let w = match &self.mask {
            Some(m) => m.columns.iter().map(Vec::len).sum(),
            None => self.weights.len(),
        };
        w + self.bias.len()
    }

    /// He uniform weights, zero biases. For masked layers the fan-in of a
    /// node is its number of member inputs and off-mask weights stay 0.
    pub fn init_he_uniform<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        self.bias.fill(T::zero());
        self.weights.fill(T::zero());
        match &self.mask {
            Some(mask) => {
                for (j, col) in mask.columns.iter().enumerate() {
                    let bound = T::of(he_uniform_bound(col.len())?);
                    for &i in col {
                        self.weights[[j, i]] = rng.random_range(-bound..=bound);
                    }
                }
            }
            None => {
                let bound = T::of(he_uniform_bound(self.in_dim())?);
                for w in self.weights.iter_mut() {
                    *w = rng.random_range(-bound..=bound);
                }
            }
        }
        Ok(())
    }

    /// Off-mask weights are exactly +0.0.
    pub fn mask_respected(&self) -> bool {
        match &self.mask {
            None => true,
            Some(m) => self
                .weights
                .iter()
                .zip(m.keep.iter())
                .all(|(w, k)| *k != T::zero() || (*w == T::zero() && w.is_sign_positive())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn bounds() {
        assert_eq!(he_uniform_bound(6).unwrap(), 1.0);
        assert_eq!(he_uniform_bound(24).unwrap(), 0.5);
        assert!(matches!(he_uniform_bound(0), Err(Error::Init(_))));
    }

    #[test]
    fn masked_init_respects_mask() {
        let mut l =
            Layer::<f64>::masked_from_columns(vec![vec![0, 2, 5], vec![1]], 6, Activation::Relu)
                .unwrap();
        l.init_he_uniform(&mut rng::stream(3, rng::streams::INIT))
            .unwrap();
        let nonzero = l.weights.row(0).iter().filter(|w| **w != 0.0).count();
        assert_eq!(nonzero, 3);
        assert!(l.weights.row(0).iter().all(|w| w.abs() <= 2f64.sqrt()));
        assert!(l.mask_respected());
        assert_eq!(l.n_params(), 4 + 2);
    }

    #[test]
    fn empty_column_fails_init() {
        let mut l = Layer::<f64>::masked_from_columns(vec![vec![]], 3, Activation::Relu).unwrap();
        assert!(l.init_he_uniform(&mut rng::stream(3, 1)).is_err());
    }
}
