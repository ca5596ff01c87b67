use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::survival::screen;
use super::{encode_f64, to_scalar};
use crate::dataio::{ClinicalTable, ExpressionMatrix};
use crate::error::{Error, Result};
use crate::genesets::{build_mask, GeneSetCollection};
use crate::netcore::{train, Model, TrainConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::stats::{jaccard_from_counts, two_prop_ztest, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproConfig {
    /// Training share of the samples; `None` trains and tests on all of
    /// them.
    pub split: Option<f64>,
    pub sig_p: f64,
    pub superset_size: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for ReproConfig {
    fn default() -> Self {
        ReproConfig {
            split: Some(0.6),
            sig_p: 0.05,
            superset_size: 200,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

/// Agreement of the significant nodes of one layer between the splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_significant: usize,
    pub test_significant: usize,
    pub overlap: usize,
    pub jaccard: f64,
    pub both_empty: bool,
}

impl SplitCounts {
    pub fn new(overlap: usize, train_significant: usize, test_significant: usize) -> Result<Self> {
        let j = jaccard_from_counts(overlap, train_significant, test_significant)?;
        Ok(SplitCounts {
            train_significant,
            test_significant,
            overlap,
            jaccard: j.value,
            both_empty: j.both_empty,
        })
    }

    /// Share of the training-significant nodes that are also significant in
    /// the test split.
    pub fn overlap_proportion(&self) -> Option<f64> {
        (self.train_significant > 0).then(|| self.overlap as f64 / self.train_significant as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproReport {
    pub config: ReproConfig,
    pub train_samples: Vec<String>,
    pub test_samples: Vec<String>,
    pub superset: SplitCounts,
    pub geneset: SplitCounts,
    pub superset_significant: [Vec<usize>; 2],
    pub geneset_significant: [Vec<usize>; 2],
    /// One-sided test that supersets overlap more than gene sets.
    pub z_test: Option<TestResult>,
    pub flags: Vec<String>,
}

/// Trains on one split, then compares the log-rank-significant supersets
/// and gene sets of both splits.
pub fn repro_pipeline<T: Scalar>(
    data: &ExpressionMatrix,
    clinical: &ClinicalTable,
    genesets: &GeneSetCollection,
    config: &ReproConfig,
) -> Result<ReproReport> {
    let n = data.n_samples();
    let (train_idx, test_idx) = match config.split {
        None => ((0..n).collect::<Vec<_>>(), (0..n).collect::<Vec<_>>()),
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!(
                    "split fraction must lie in (0, 1), got {f}"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(config.seed, rng::streams::REPRO_SPLIT));
            let n_train = (n as f64 * f).round() as usize;
            let (mut a, mut b) = (order[..n_train].to_vec(), order[n_train..].to_vec());
            a.sort_unstable();
            b.sort_unstable();
            (a, b)
        }
    };
    let train_data = data.select_samples(&train_idx);
    let test_data = data.select_samples(&test_idx);
    let survival = |d: &ExpressionMatrix, which: &str| -> Result<(Vec<f64>, Vec<bool>)> {
        let records = clinical.for_samples(&d.sample_ids)?;
        let events: Vec<bool> = records.iter().map(|r| r.event).collect();
        if !events.iter().any(|&e| e) {
            return Err(Error::Degenerate(format!(
                "the {which} split has no deaths"
            )));
        }
        Ok((
            records.iter().map(|r| f64::from(r.time_days)).collect(),
            events,
        ))
    };
    let (train_times, train_events) = survival(&train_data, "training")?;
    let (test_times, test_events) = survival(&test_data, "test")?;

    let mask = build_mask(genesets, &data.gene_ids)?;
    let mut model =
        Model::<T>::autoencoder(&mask, config.superset_size, rng::child_seed(config.seed, 0))?;
    let train_config = TrainConfig {
        seed: rng::child_seed(config.seed, 1),
        ..config.train.clone()
    };
    let x = to_scalar::<T>(&train_data.values);
    train(&mut model, x.view(), None, &train_config)?;

    let (gs_train, ss_train) = encode_f64(&model, &train_data)?;
    let (gs_test, ss_test) = encode_f64(&model, &test_data)?;
    let significant = |nodes, times: &[f64], events: &[bool]| -> Vec<usize> {
        screen(nodes, times, events)
            .iter()
            .filter(|s| s.test.is_some_and(|t| t.p_value < config.sig_p))
            .map(|s| s.node)
            .collect()
    };
    let ss = [
        significant(&ss_train, &train_times, &train_events),
        significant(&ss_test, &test_times, &test_events),
    ];
    let gs = [
        significant(&gs_train, &train_times, &train_events),
        significant(&gs_test, &test_times, &test_events),
    ];
    let overlap = |p: &[Vec<usize>; 2]| p[0].iter().filter(|i| p[1].contains(i)).count();
    let superset = SplitCounts::new(overlap(&ss), ss[0].len(), ss[1].len())?;
    let geneset = SplitCounts::new(overlap(&gs), gs[0].len(), gs[1].len())?;

    let mut flags = Vec::new();
    if superset.train_significant == 0 {
        flags.push("no significant supersets in the training split".to_string());
    }
    if geneset.train_significant == 0 {
        flags.push("no significant gene sets in the training split".to_string());
    }
    let z_test = if flags.is_empty() {
        Some(two_prop_ztest(
            superset.overlap,
            superset.train_significant,
            geneset.overlap,
            geneset.train_significant,
        )?)
    } else {
        None
    };
    log::info!(
        "superset Jaccard {:.4} ({}/{}), gene-set Jaccard {:.4} ({}/{})",
        superset.jaccard,
        superset.overlap,
        superset.train_significant,
        geneset.jaccard,
        geneset.overlap,
        geneset.train_significant
    );
    Ok(ReproReport {
        config: config.clone(),
        train_samples: train_data.sample_ids,
        test_samples: test_data.sample_ids,
        superset,
        geneset,
        superset_significant: ss,
        geneset_significant: gs,
        z_test,
        flags,
    })
}

impl ReproReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "level\ttrain_significant\ttest_significant\toverlap\tjaccard\toverlap_proportion\n",
        );
        for (name, c) in [("superset", &self.superset), ("geneset", &self.geneset)] {
            let prop = c
                .overlap_proportion()
                .map_or("NA".to_string(), |p| p.to_string());
            out.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{}\t{prop}\n",
                c.train_significant, c.test_significant, c.overlap, c.jaccard
            ));
        }
        out
    }
}
