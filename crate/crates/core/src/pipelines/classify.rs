use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::to_scalar;
use crate::dataio::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::genesets::{build_mask, GeneSetCollection};
use crate::netcore::pca::pca;
use crate::netcore::{kfold_cv, CvReport, Model, TrainConfig};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// masked gene sets -> superset -> softmax
    Superset,
    /// masked gene sets -> softmax
    Geneset,
    /// fully connected layers -> softmax
    Dense,
    /// top principal components -> fully connected layers -> softmax
    PcaDense,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "superset" => Ok(Variant::Superset),
            "geneset" => Ok(Variant::Geneset),
            "dense" => Ok(Variant::Dense),
            "pca_dense" => Ok(Variant::PcaDense),
            _ => Err(Error::Config(format!(
                "unknown classifier variant `{s}` (superset, geneset, dense, pca_dense)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub folds: usize,
    pub superset_size: usize,
    /// Hidden widths of the `dense` variant; empty means the widths of the
    /// superset classifier (gene sets, then superset).
    pub dense_hidden: Vec<usize>,
    pub pca_k: usize,
    pub pca_hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            folds: 10,
            superset_size: 200,
            dense_hidden: vec![],
            pca_k: 500,
            pca_hidden: vec![400, 100],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub variant: Variant,
    pub class_names: Vec<String>,
    pub n_params: usize,
    pub layer_widths: Vec<usize>,
    /// Principal components actually used (`pca_dense` only).
    pub pca_components: Option<usize>,
    pub pca_truncated: bool,
    pub cv: CvReport,
}

/// Stratified k-fold accuracy of one classifier architecture.
pub fn classify_pipeline<T: Scalar>(
    data: &ExpressionMatrix,
    labels: &[String],
    genesets: Option<&GeneSetCollection>,
    variant: Variant,
    config: &ClassifyConfig,
) -> Result<ClassifyReport> {
    if labels.len() != data.n_samples() {
        return Err(Error::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            data.n_samples()
        )));
    }
    let class_names: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if class_names.len() < 2 {
        return Err(Error::Config(
            "classification needs at least two classes".into(),
        ));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| class_names.binary_search(l).unwrap())
        .collect();
    let mask = match variant {
        Variant::Superset | Variant::Geneset => {
            let c = genesets
                .ok_or_else(|| Error::Config(format!("variant {variant:?} needs gene sets")))?;
            Some(build_mask(c, &data.gene_ids)?)
        }
        _ => None,
    };
    let seed_of = |fold: usize| rng::child_seed(config.train.seed, 1000 + fold as u64);

    let mut pca_components = None;
    let mut pca_truncated = false;
    let (x, input_ids) = match variant {
        Variant::PcaDense => {
            let p = pca(to_scalar::<T>(&data.values).view(), config.pca_k)?;
            pca_components = Some(p.k());
            pca_truncated = p.truncated;
            let ids = (1..=p.k()).map(|i| format!("PC{i}")).collect();
            (p.scores, ids)
        }
        _ => (to_scalar::<T>(&data.values), data.gene_ids.clone()),
    };
    let hidden: Vec<usize> = match variant {
        Variant::Dense if config.dense_hidden.is_empty() => match genesets {
            Some(c) => vec![
                build_mask(c, &data.gene_ids)?.n_sets(),
                config.superset_size,
            ],
            None => vec![config.superset_size],
        },
        Variant::Dense => config.dense_hidden.clone(),
        Variant::PcaDense => config.pca_hidden.clone(),
        _ => vec![],
    };
    let build = |fold: usize| -> Result<Model<T>> {
        match variant {
            Variant::Superset => Model::masked_classifier(
                mask.as_ref().unwrap(),
                Some(config.superset_size),
                class_names.clone(),
                seed_of(fold),
            ),
            Variant::Geneset => Model::masked_classifier(
                mask.as_ref().unwrap(),
                None,
                class_names.clone(),
                seed_of(fold),
            ),
            Variant::Dense | Variant::PcaDense => Model::dense_classifier(
                input_ids.clone(),
                &hidden,
                class_names.clone(),
                seed_of(fold),
            ),
        }
    };
    let probe = build(0)?;
    let layer_widths = probe.layers.iter().map(|l| l.out_dim()).collect();
    let n_params = probe.n_params();
    let cv = kfold_cv(x.view(), &y, config.folds, &config.train, build)?;
    log::info!(
        "{variant:?}: {}-fold accuracy {:.4}",
        config.folds,
        cv.accuracy
    );
    Ok(ClassifyReport {
        variant,
        class_names,
        n_params,
        layer_widths,
        pca_components,
        pca_truncated,
        cv,
    })
}

impl ClassifyReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fold\tn_test\taccuracy\n");
        for (i, (a, n)) in self
            .cv
            .fold_accuracies
            .iter()
            .zip(&self.cv.fold_sizes)
            .enumerate()
        {
            out.push_str(&format!("{}\t{n}\t{a}\n", i + 1));
        }
        out.push_str(&format!(
            "mean\t{}\t{}\n",
            self.cv.fold_sizes.iter().sum::<usize>(),
            self.cv.accuracy
        ));
        out
    }
}
