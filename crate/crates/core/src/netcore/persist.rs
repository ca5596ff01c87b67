//! Model JSON: layer specs, masks as per-node index lists and weights as
//! row-major arrays. Numbers are written as shortest round-trip decimals,
//! so a save/load cycle reproduces every weight exactly.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, Head, Layer, LayerKind, LayerMask, Model, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::PRNG_NAME;
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerJson {
    kind: LayerKind,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<Vec<usize>>>,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelJson {
    format_version: u32,
    dtype: String,
    prng: String,
    head: Head,
    seed: u64,
    config: TrainConfig,
    gene_ids: Vec<String>,
    set_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
    layers: Vec<LayerJson>,
}

impl<T: Scalar> Model<T> {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelJson {
            format_version: MODEL_FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            prng: PRNG_NAME.to_string(),
            head: self.head,
            seed: self.seed,
            config: self.config.clone(),
            gene_ids: self.gene_ids.clone(),
            set_names: self.set_names.clone(),
            class_names: self.class_names.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerJson {
                    kind: l.kind,
                    activation: l.activation,
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    mask: l.mask.as_ref().map(|m| m.columns.clone()),
                    weights: l.weights.iter().map(|w| w.as_f64()).collect(),
                    bias: l.bias.iter().map(|b| b.as_f64()).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelJson = serde_json::from_str(text)?;
        if doc.dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "model stores {} weights, expected {}",
                doc.dtype,
                T::DTYPE
            )));
        }
        from_doc(doc)
    }
}

fn from_doc<T: Scalar>(doc: ModelJson) -> Result<Model<T>> {
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {}",
            doc.format_version
        )));
    }
    if doc.prng != PRNG_NAME {
        log::warn!(
            "model was produced with PRNG `{}`, this build uses `{PRNG_NAME}`",
            doc.prng
        );
    }
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let convert = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
            let weights = Array2::from_shape_vec((l.out_dim, l.in_dim), convert(&l.weights))
                .map_err(|e| Error::Format(format!("layer {i} weights: {e}")))?;
            let bias = Array1::from(convert(&l.bias));
            if bias.len() != l.out_dim {
                return Err(Error::Format(format!(
                    "layer {i} has {} biases for {} nodes",
                    bias.len(),
                    l.out_dim
                )));
            }
            let mask = l
                .mask
                .map(|cols| LayerMask::new(cols, l.in_dim))
                .transpose()?;
            let layer = Layer {
                kind: l.kind,
                activation: l.activation,
                weights,
                bias,
                mask,
            };
            if !layer.mask_respected() {
                return Err(Error::Format(format!(
                    "layer {i} has non-zero weights outside its mask"
                )));
            }
            Ok(layer)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = Model {
        layers,
        head: doc.head,
        gene_ids: doc.gene_ids,
        set_names: doc.set_names,
        class_names: doc.class_names,
        seed: doc.seed,
        config: doc.config,
    };
    model.validate()?;
    Ok(model)
}

/// A model loaded without knowing its precision in advance.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    F64(Model<f64>),
    F32(Model<f32>),
}

impl AnyModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelJson = serde_json::from_str(text)?;
        match doc.dtype.as_str() {
            "f64" => Ok(AnyModel::F64(from_doc(doc)?)),
            "f32" => Ok(AnyModel::F32(from_doc(doc)?)),
            other => Err(Error::Format(format!("unknown dtype `{other}`"))),
        }
    }

    /// The model in double precision; `f32` weights widen exactly.
    pub fn into_f64(self) -> Model<f64> {
        match self {
            AnyModel::F64(m) => m,
            AnyModel::F32(m) => Model {
                layers: m
                    .layers
                    .into_iter()
                    .map(|l| Layer {
                        kind: l.kind,
                        activation: l.activation,
                        weights: l.weights.mapv(f64::from),
                        bias: l.bias.mapv(f64::from),
                        mask: l.mask.map(|mk| LayerMask {
                            columns: mk.columns,
                            keep: mk.keep.mapv(f64::from),
                        }),
                    })
                    .collect(),
                head: m.head,
                gene_ids: m.gene_ids,
                set_names: m.set_names,
                class_names: m.class_names,
                seed: m.seed,
                config: m.config,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genesets::MembershipMask;

    fn mask() -> MembershipMask {
        let genes = (0..5).map(|i| format!("g{i}")).collect();
        MembershipMask::from_columns(
            genes,
            vec!["A".into(), "B".into()],
            vec![vec![0, 1, 2], vec![2, 3, 4]],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = Model::<f64>::autoencoder(&mask(), 3, 11).unwrap();
        let text = m.to_json().unwrap();
        let back = Model::<f64>::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), text);

        let m32 = Model::<f32>::autoencoder(&mask(), 3, 11).unwrap();
        let any = AnyModel::from_json(&m32.to_json().unwrap()).unwrap();
        assert_eq!(any, AnyModel::F32(m32.clone()));
        assert!(Model::<f64>::from_json(&m32.to_json().unwrap()).is_err());
    }

    #[test]
    fn off_mask_weight_rejected() {
        let m = Model::<f64>::autoencoder(&mask(), 3, 11).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        // layer 0 weight (0, 4) is outside set A
        doc["layers"][0]["weights"][4] = serde_json::json!(0.5);
        assert!(matches!(
            Model::<f64>::from_json(&doc.to_string()),
            Err(Error::Format(_))
        ));
    }
}
