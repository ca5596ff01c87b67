use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{one_hot, train, Model, TrainConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Mean of the per-fold accuracies.
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
}

/// Test-index sets of `k` stratified folds. Each class's samples are
/// shuffled and dealt round-robin, continuing across classes so fold sizes
/// differ by at most one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config("cross-validation needs k >= 2".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    if let Some((c, members)) = by_class
        .iter()
        .enumerate()
        .find(|(_, m)| !m.is_empty() && m.len() < k)
    {
        return Err(Error::Config(format!(
            "class {c} has {} samples; stratified {k}-fold CV needs at least {k}",
            members.len()
        )));
    }
    let mut rng = rng::stream(seed, rng::streams::FOLDS);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified k-fold accuracy of classifiers produced by `build`.
///
/// `x` is `[n_features, n_samples]`; `build(fold)` returns a freshly
/// initialized model for that fold. Fold `f` trains with a seed derived
/// from `config.seed` and `f`.
pub fn kfold_cv<T, F>(
    x: ArrayView2<T>,
    labels: &[usize],
    k: usize,
    config: &TrainConfig,
    mut build: F,
) -> Result<CvReport>
where
    T: Scalar,
    F: FnMut(usize) -> Result<Model<T>>,
{
    if labels.len() != x.ncols() {
        return Err(Error::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            x.ncols()
        )));
    }
    let folds = stratified_folds(labels, k, config.seed)?;
    let mut fold_accuracies = Vec::with_capacity(k);
    let mut fold_sizes = Vec::with_capacity(k);
    for (f, test_idx) in folds.iter().enumerate() {
        let mut in_test = vec![false; labels.len()];
        for &i in test_idx {
            in_test[i] = true;
        }
        let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| !in_test[i]).collect();
        let mut model = build(f)?;
        let n_classes = model.out_dim();
        let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        let targets = one_hot::<T>(&train_labels, n_classes);
        let fold_config = TrainConfig {
            seed: rng::child_seed(config.seed, f as u64),
            ..config.clone()
        };
        train(
            &mut model,
            x.select(Axis(1), &train_idx).view(),
            Some(targets.view()),
            &fold_config,
        )?;
        let predicted = model.predict_classes(x.select(Axis(1), test_idx).view())?;
        let correct = predicted
            .iter()
            .zip(test_idx)
            .filter(|(p, &i)| **p == labels[i])
            .count();
        fold_accuracies.push(correct as f64 / test_idx.len() as f64);
        fold_sizes.push(test_idx.len());
        log::info!("fold {}/{k}: accuracy {:.4}", f + 1, fold_accuracies[f]);
    }
    let accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
    Ok(CvReport {
        accuracy,
        fold_accuracies,
        fold_sizes,
    })
}
