//! The four analyses built on a trained model — subtype discovery,
//! survival screening, split reproducibility and classification — plus the
//! embedding, clustering and synthetic-data plumbing they rely on.

mod classify;
mod dbscan;
mod repro;
mod subtype;
mod survival;
pub mod synth;
mod tsne;

use ndarray::Array2;

pub use classify::{classify_pipeline, ClassifyConfig, ClassifyReport, Variant};
pub use dbscan::{dbscan, NOISE};
pub use repro::{repro_pipeline, ReproConfig, ReproReport, SplitCounts};
pub use subtype::{
    subtype_pipeline, ClusterSource, SubtypeConfig, SubtypeReport, SupersetHighImpact, SupersetTest,
};
pub use survival::{
    survival_pipeline, KmCurvePair, NodeSurvival, SignificantSuperset, SurvivalConfig,
    SurvivalReport,
};
pub use synth::{synth, HazardLink, SynthConfig, SynthData};
pub use tsne::{tsne_exact, Tsne, TsneConfig};

use crate::dataio::ExpressionMatrix;
use crate::error::Result;
use crate::netcore::Model;
use crate::scalar::Scalar;

pub(crate) fn to_scalar<T: Scalar>(a: &Array2<f64>) -> Array2<T> {
    a.mapv(T::of)
}

/// Gene-set and superset outputs for every sample, in double precision.
pub(crate) fn encode_f64<T: Scalar>(
    model: &Model<T>,
    data: &ExpressionMatrix,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let x = to_scalar::<T>(&data.values);
    let enc = model.encode(&data.gene_ids, x.view())?;
    Ok((
        enc.geneset.mapv(|v| v.as_f64()),
        enc.superset.mapv(|v| v.as_f64()),
    ))
}

/// Formats a float for TSV output; non-finite values become `NA`.
pub(crate) fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

pub(crate) fn mean_of(row: ndarray::ArrayView1<f64>, idx: &[usize]) -> f64 {
    idx.iter().map(|&i| row[i]).sum::<f64>() / idx.len() as f64
}

pub(crate) fn pick(row: ndarray::ArrayView1<f64>, idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| row[i]).collect()
}
