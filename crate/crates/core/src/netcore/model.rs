use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::optim::TrainConfig;
use super::{Activation, Head, Layer, LayerKind};
use crate::error::{Error, Result};
use crate::genesets::MembershipMask;
use crate::rng;
use crate::scalar::Scalar;

/// Cross-entropy clamps probabilities at this value before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// A layer stack with its head type and the identifiers it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub layers: Vec<Layer<T>>,
    pub head: Head,
    /// Input rows the model expects, in order.
    pub gene_ids: Vec<String>,
    /// Names of the masked layer's nodes, when there is one.
    pub set_names: Vec<String>,
    pub class_names: Option<Vec<String>>,
    /// Seed used for weight initialization.
    pub seed: u64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

/// Outputs of the first two layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<T> {
    /// `[n_sets, n_samples]`
    pub geneset: Array2<T>,
    /// `[n_supersets, n_samples]`
    pub superset: Array2<T>,
}

impl<T: Scalar> Model<T> {
    /// Validates the layer stack and initializes it with He uniform weights
    /// drawn from `seed`.
    pub fn new(
        layers: Vec<Layer<T>>,
        head: Head,
        gene_ids: Vec<String>,
        set_names: Vec<String>,
        class_names: Option<Vec<String>>,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Model {
            layers,
            head,
            gene_ids,
            set_names,
            class_names,
            seed,
            config: TrainConfig::default(),
        };
        model.validate()?;
        let mut rng = rng::stream(seed, rng::streams::INIT);
        for layer in &mut model.layers {
            layer.init_he_uniform(&mut rng)?;
        }
        Ok(model)
    }

    /// input -> masked(gene sets, ReLU) -> dense(superset, ReLU)
    /// -> dense(n_sets, ReLU) -> dense(input, linear).
    pub fn autoencoder(mask: &MembershipMask, superset_size: usize, seed: u64) -> Result<Self> {
        let (genes, sets) = (mask.n_genes(), mask.n_sets());
        let layers = vec![
            Layer::masked(mask, Activation::Relu)?,
            Layer::dense(sets, superset_size, Activation::Relu),
            Layer::dense(superset_size, sets, Activation::Relu),
            Layer::dense(sets, genes, Activation::Linear),
        ];
        Self::new(
            layers,
            Head::Reconstruction,
            mask.gene_ids.clone(),
            mask.set_names.clone(),
            None,
            seed,
        )
    }

    /// input -> masked(gene sets) -> [dense(superset)] -> softmax.
    /// `superset_size = None` drops the superset layer.
    pub fn masked_classifier(
        mask: &MembershipMask,
        superset_size: Option<usize>,
        class_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        let mut layers = vec![Layer::masked(mask, Activation::Relu)?];
        let mut width = mask.n_sets();
        if let Some(s) = superset_size {
            layers.push(Layer::dense(width, s, Activation::Relu));
            width = s;
        }
        layers.push(Layer::dense(width, class_names.len(), Activation::Softmax));
        Self::new(
            layers,
            Head::Classification,
            mask.gene_ids.clone(),
            mask.set_names.clone(),
            Some(class_names),
            seed,
        )
    }

    /// Fully connected ReLU layers of the given widths, then softmax.
    pub fn dense_classifier(
        input_ids: Vec<String>,
        hidden: &[usize],
        class_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = input_ids.len();
        for &h in hidden {
            layers.push(Layer::dense(width, h, Activation::Relu));
            width = h;
        }
        layers.push(Layer::dense(width, class_names.len(), Activation::Softmax));
        Self::new(
            layers,
            Head::Classification,
            input_ids,
            vec![],
            Some(class_names),
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Config("model has no layers".into()))?;
        if first.in_dim() != self.gene_ids.len() {
            return Err(Error::Shape(format!(
                "first layer takes {} inputs but the model lists {} genes",
                first.in_dim(),
                self.gene_ids.len()
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} values but layer {} takes {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if l.activation == Activation::Softmax
                && (i != last || self.head != Head::Classification)
            {
                return Err(Error::Config(
                    "softmax is only allowed as the final classifier layer".into(),
                ));
            }
            if (l.kind == LayerKind::Masked) != l.mask.is_some() {
                return Err(Error::Config(format!(
                    "layer {i}: mask must be present exactly for masked layers"
                )));
            }
            if let Some(m) = &l.mask {
                if m.keep.dim() != l.weights.dim() {
                    return Err(Error::Shape(format!(
                        "layer {i}: mask shape differs from weights"
                    )));
                }
            }
        }
        match self.head {
            Head::Classification => {
                if self.layers[last].activation != Activation::Softmax {
                    return Err(Error::Config(
                        "classifier must end in a softmax layer".into(),
                    ));
                }
                let n = self.class_names.as_ref().map_or(0, Vec::len);
                if n != self.layers[last].out_dim() {
                    return Err(Error::Config(format!(
                        "{n} class names for {} outputs",
                        self.layers[last].out_dim()
                    )));
                }
            }
            Head::Reconstruction => {
                if self.layers[last].out_dim() != first.in_dim() {
                    return Err(Error::Shape(
                        "reconstruction output must match the input size".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn mask_respected(&self) -> bool {
        self.layers.iter().all(Layer::mask_respected)
    }

    /// Activations of every layer for `x` (`[in_dim, n_samples]`); index 0
    /// is the input itself.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<Vec<Array2<T>>> {
        if x.nrows() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} rows, model expects {}",
                x.nrows(),
                self.in_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("input contains non-finite values".into()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for layer in &self.layers {
            let prev = acts.last().unwrap();
            let mut z = layer.weights.dot(prev);
            z += &layer.bias.view().insert_axis(Axis(1));
            activate(layer.activation, &mut z);
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.forward(x)?.pop().unwrap())
    }

    /// Class index with the largest softmax output, per sample.
    pub fn predict_classes(&self, x: ArrayView2<T>) -> Result<Vec<usize>> {
        Ok(argmax_columns(&self.predict(x)?))
    }

    pub fn loss(&self, prediction: &Array2<T>, target: ArrayView2<T>) -> Result<f64> {
        if prediction.dim() != target.dim() {
            return Err(Error::Shape(format!(
                "prediction {:?} vs target {:?}",
                prediction.dim(),
                target.dim()
            )));
        }
        Ok(loss(self.head, prediction, target))
    }

    /// Exact gradients of the loss for the activations of a forward pass.
    /// Off-mask weight gradients are zero.
    pub fn backward(&self, acts: &[Array2<T>], target: ArrayView2<T>) -> Result<Gradients<T>> {
        let output = acts
            .last()
            .ok_or_else(|| Error::Shape("no activations".into()))?;
        if acts.len() != self.layers.len() + 1 || output.dim() != target.dim() {
            return Err(Error::Shape(
                "activations or target do not match the model".into(),
            ));
        }
        let n = T::of(output.ncols() as f64);
        // gradient w.r.t. the pre-activation of the last layer
        let mut delta = match self.head {
            Head::Classification => (output - &target) / n,
            Head::Reconstruction => {
                let scale = T::of(2.0) / (n * T::of(output.nrows() as f64));
                let mut d = (output - &target) * scale;
                activation_grad(self.layers.last().unwrap().activation, output, &mut d);
                d
            }
        };

        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let prev = &acts[l];
            let mut w_grad = delta.dot(&prev.t());
            if let Some(mask) = &layer.mask {
                mask.apply(&mut w_grad);
            }
            gb.push(delta.sum_axis(Axis(1)));
            gw.push(w_grad);
            if l > 0 {
                let mut d_prev = layer.weights.t().dot(&delta);
                activation_grad(self.layers[l - 1].activation, prev, &mut d_prev);
                delta = d_prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }

    /// Gene-set and superset layer outputs of `x` (`[n_genes, n_samples]`),
    /// whose rows must follow `gene_ids`.
    pub fn encode(&self, gene_ids: &[String], x: ArrayView2<T>) -> Result<Encoded<T>> {
        if gene_ids != self.gene_ids.as_slice() {
            return Err(Error::Consistency(
                "data gene order differs from the model's training genes".into(),
            ));
        }
        if self.layers.len() < 2 {
            return Err(Error::Config("encoding needs at least two layers".into()));
        }
        let mut acts = self.forward(x)?;
        let superset = acts.swap_remove(2);
        let geneset = acts.swap_remove(1);
        Ok(Encoded { geneset, superset })
    }

    /// Incoming weights of superset node `j` from each gene-set node.
    pub fn superset_weights(&self, j: usize) -> Vec<f64> {
        self.layers[1]
            .weights
            .row(j)
            .iter()
            .map(|w| w.as_f64())
            .collect()
    }
}

fn activate<T: Scalar>(act: Activation, z: &mut Array2<T>) {
    match act {
        Activation::Linear => {}
        Activation::Relu => z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Softmax => {
            for mut col in z.columns_mut() {
                let max = col.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                col.mapv_inplace(|v| (v - max).exp());
                let sum = col.sum();
                col.mapv_inplace(|v| v / sum);
            }
        }
    }
}

/// Multiplies `d` (gradient w.r.t. a layer's output) by the activation
/// derivative, expressed through the output `a`.
fn activation_grad<T: Scalar>(act: Activation, a: &Array2<T>, d: &mut Array2<T>) {
    match act {
        Activation::Linear => {}
        Activation::Relu => Zip::from(d).and(a).for_each(|d, &a| {
            if a <= T::zero() {
                *d = T::zero();
            }
        }),
        // softmax only appears as the output of a cross-entropy head, whose
        // combined gradient is formed directly
        Activation::Softmax => unreachable!("softmax gradient is fused with cross-entropy"),
    }
}

/// Mean squared error over all entries, or mean categorical cross-entropy
/// over samples.
pub(crate) fn loss<T: Scalar>(head: Head, prediction: &Array2<T>, target: ArrayView2<T>) -> f64 {
    match head {
        Head::Reconstruction => {
            let sse: f64 = Zip::from(prediction)
                .and(&target)
                .fold(0.0, |acc, &p, &t| acc + (p.as_f64() - t.as_f64()).powi(2));
            sse / prediction.len() as f64
        }
        Head::Classification => {
            let ce: f64 = Zip::from(prediction).and(&target).fold(0.0, |acc, &p, &t| {
                acc - t.as_f64() * p.as_f64().max(PROB_FLOOR).ln()
            });
            ce / prediction.ncols() as f64
        }
    }
}

pub fn argmax_columns<T: Scalar>(m: &Array2<T>) -> Vec<usize> {
    m.columns()
        .into_iter()
        .map(|c| {
            c.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

/// `[n_classes, n]` one-hot matrix.
pub fn one_hot<T: Scalar>(labels: &[usize], n_classes: usize) -> Array2<T> {
    let mut m = Array2::zeros((n_classes, labels.len()));
    for (j, &c) in labels.iter().enumerate() {
        m[[c, j]] = T::one();
    }
    m
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i}")).collect()
    }

    fn single(w: Array2<f64>, act: Activation, head: Head) -> Model<f64> {
        let mut l = Layer::dense(w.ncols(), w.nrows(), act);
        l.weights = w;
        Model {
            layers: vec![l],
            head,
            gene_ids: ids(2),
            set_names: vec![],
            class_names: None,
            seed: 0,
            config: TrainConfig::default(),
        }
    }

    #[test]
    fn relu_node_by_hand() {
        let m = single(array![[1.0, -1.0]], Activation::Relu, Head::Reconstruction);
        assert_eq!(
            m.forward(array![[2.0], [3.0]].view()).unwrap()[1][[0, 0]],
            0.0
        );
        assert_eq!(
            m.forward(array![[3.0], [2.0]].view()).unwrap()[1][[0, 0]],
            1.0
        );
    }

    #[test]
    fn masked_input_carries_no_signal() {
        let mut l = Layer::<f64>::masked_from_columns(vec![vec![0]], 2, Activation::Relu).unwrap();
        l.weights[[0, 0]] = 0.7;
        let m = Model {
            layers: vec![l],
            head: Head::Reconstruction,
            gene_ids: ids(2),
            set_names: vec![],
            class_names: None,
            seed: 0,
            config: TrainConfig::default(),
        };
        let a = m.forward(array![[5.0], [100.0]].view()).unwrap();
        let b = m.forward(array![[5.0], [0.0]].view()).unwrap();
        assert_eq!(a[1], b[1]);
    }

    #[test]
    fn loss_examples() {
        let m = single(
            array![[1.0, 0.0], [0.0, 1.0]],
            Activation::Linear,
            Head::Reconstruction,
        );
        let t = array![[1.0], [1.0]];
        assert_eq!(m.loss(&t.clone(), t.view()).unwrap(), 0.0);
        assert_eq!(m.loss(&array![[1.0], [3.0]], t.view()).unwrap(), 2.0);
        assert_eq!(
            loss(
                Head::Classification,
                &array![[1.0], [0.0]],
                array![[1.0], [0.0]].view()
            ),
            0.0
        );
        let clamped = loss(
            Head::Classification,
            &array![[0.0], [1.0]],
            array![[1.0], [0.0]].view(),
        );
        assert!((clamped + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn scalar_gradient_by_hand() {
        let (w, x, t) = (0.7f64, 1.5, 2.0);
        let mut l = Layer::dense(1, 1, Activation::Linear);
        l.weights[[0, 0]] = w;
        let m = Model {
            layers: vec![l],
            head: Head::Reconstruction,
            gene_ids: ids(1),
            set_names: vec![],
            class_names: None,
            seed: 0,
            config: TrainConfig::default(),
        };
        let acts = m.forward(array![[x]].view()).unwrap();
        let g = m.backward(&acts, array![[t]].view()).unwrap();
        assert!((g.weights[0][[0, 0]] - 2.0 * (w * x - t) * x).abs() < 1e-15);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let mut first = Layer::dense(2, 2, Activation::Relu);
        first.weights = array![[-1.0, -1.0], [-2.0, -0.5]];
        let mut out = Layer::dense(2, 2, Activation::Linear);
        out.weights = array![[1.0, 2.0], [3.0, 4.0]];
        let m = Model {
            layers: vec![first, out],
            head: Head::Reconstruction,
            gene_ids: ids(2),
            set_names: vec![],
            class_names: None,
            seed: 0,
            config: TrainConfig::default(),
        };
        let x = array![[1.0, 2.0], [1.0, 0.5]];
        let acts = m.forward(x.view()).unwrap();
        let g = m.backward(&acts, x.view()).unwrap();
        assert!(g.weights[0].iter().all(|v| *v == 0.0));
        assert!(g.biases[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softmax_is_a_distribution() {
        let m = single(
            array![[300.0, 1.0], [-2.0, 0.5], [0.0, 0.0]],
            Activation::Softmax,
            Head::Classification,
        );
        let m = Model {
            class_names: Some(vec!["a".into(), "b".into(), "c".into()]),
            ..m
        };
        let p = m.predict(array![[1.0, -4.0], [2.0, 0.0]].view()).unwrap();
        for col in p.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-9);
            assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn builders_have_expected_layout() {
        let mask = MembershipMask::from_columns(
            ids(4),
            vec!["A".into(), "B".into()],
            vec![vec![0, 1], vec![2, 3]],
        )
        .unwrap();
        let ae = Model::<f64>::autoencoder(&mask, 3, 1).unwrap();
        let dims: Vec<(usize, usize)> = ae
            .layers
            .iter()
            .map(|l| (l.in_dim(), l.out_dim()))
            .collect();
        assert_eq!(dims, vec![(4, 2), (2, 3), (3, 2), (2, 4)]);
        assert!(ae.mask_respected());

        let classes = vec!["x".to_string(), "y".to_string()];
        let with = Model::<f64>::masked_classifier(&mask, Some(3), classes.clone(), 1).unwrap();
        let without = Model::<f64>::masked_classifier(&mask, None, classes, 1).unwrap();
        assert_eq!(with.layers.len(), 3);
        assert_eq!(without.layers.len(), 2);

        let enc = ae
            .encode(&ae.gene_ids, Array2::zeros((4, 2)).view())
            .unwrap();
        assert_eq!(enc.superset.dim(), (3, 2));
        assert!(ae.encode(&ids(3), Array2::zeros((3, 1)).view()).is_err());
    }

    #[test]
    fn zero_input_encodes_to_relu_bias() {
        let mask = MembershipMask::from_columns(
            ids(3),
            vec!["A".into(), "B".into()],
            vec![vec![0, 1], vec![2]],
        )
        .unwrap();
        let mut ae = Model::<f64>::autoencoder(&mask, 2, 5).unwrap();
        ae.layers[0].bias = array![0.3, -0.2];
        let enc = ae
            .encode(&ae.gene_ids.clone(), Array2::zeros((3, 1)).view())
            .unwrap();
        assert_eq!(enc.geneset.column(0).to_vec(), vec![0.3, 0.0]);
    }
}
