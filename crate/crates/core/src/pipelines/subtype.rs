use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dbscan, encode_f64, fmt, mean_of, pick, tsne_exact, TsneConfig, NOISE};
use crate::dataio::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::netcore::Model;
use crate::scalar::Scalar;
use crate::stats::{
    gs_score, mww_one_tailed, pscore, select_high_impact, Direction, GsScoreEntry, TestResult,
};

/// Where the sample groups come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterSource {
    /// t-SNE of the superset outputs, then DBSCAN on the embedding.
    Internal {
        tsne: TsneConfig,
        eps: f64,
        min_pts: usize,
    },
    /// One label per sample; [`NOISE`] marks excluded samples.
    Labels(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeConfig {
    /// Location shift of the superset-level tests.
    pub shift: f64,
    pub p_threshold: f64,
    /// Location shift of the gene-set-level tests behind each PScore.
    pub geneset_shift: f64,
    /// Cluster compared against the rest; the smallest cluster if unset.
    pub target: Option<i64>,
}

impl SubtypeConfig {
    pub fn new(shift: f64) -> Self {
        SubtypeConfig {
            shift,
            p_threshold: 0.01,
            geneset_shift: 0.5,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersetTest {
    pub superset: usize,
    /// Target group above the rest.
    pub up: TestResult,
    /// Rest above the target group.
    pub down: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersetHighImpact {
    pub superset: usize,
    pub direction: Direction,
    pub p_value: f64,
    pub sd: f64,
    pub cutoff: f64,
    pub zero_sd: bool,
    pub entries: Vec<GsScoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeReport {
    pub config: SubtypeConfig,
    pub cluster_labels: Vec<i64>,
    pub target_cluster: i64,
    /// Sample indices of the target cluster.
    pub group1: Vec<usize>,
    /// Sample indices of every other non-noise sample.
    pub group2: Vec<usize>,
    pub tests: Vec<SupersetTest>,
    /// `(superset, p)` of the significant up-supersets, by index.
    pub up_supersets: Vec<(usize, f64)>,
    pub down_supersets: Vec<(usize, f64)>,
    pub high_impact: Vec<SupersetHighImpact>,
    /// `[n_samples, 2]` t-SNE coordinates when clustering was internal.
    pub embedding: Option<Array2<f64>>,
}

/// Compares supersets between a target cluster and the remaining samples,
/// then ranks the gene sets behind each significant superset.
pub fn subtype_pipeline<T: Scalar>(
    model: &Model<T>,
    data: &ExpressionMatrix,
    clusters: &ClusterSource,
    config: &SubtypeConfig,
) -> Result<SubtypeReport> {
    let (geneset, superset) = encode_f64(model, data)?;
    let n = data.n_samples();
    let (cluster_labels, embedding) = match clusters {
        ClusterSource::Labels(l) => {
            if l.len() != n {
                return Err(Error::Shape(format!(
                    "{} cluster labels for {n} samples",
                    l.len()
                )));
            }
            (l.clone(), None)
        }
        ClusterSource::Internal { tsne, eps, min_pts } => {
            let points = superset.t().to_owned();
            let emb = tsne_exact(points.view(), tsne)?.embedding;
            (dbscan(emb.view(), *eps, *min_pts)?, Some(emb))
        }
    };

    let mut sizes: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in cluster_labels.iter().filter(|&&l| l != NOISE) {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(Error::Degenerate(format!(
            "subtype analysis needs at least two clusters, found {}",
            sizes.len()
        )));
    }
    let target = match config.target {
        Some(t) if sizes.contains_key(&t) => t,
        Some(t) => return Err(Error::Config(format!("target cluster {t} does not exist"))),
        None => *sizes.iter().min_by_key(|(l, s)| (**s, **l)).unwrap().0,
    };
    let group1: Vec<usize> = (0..n).filter(|&i| cluster_labels[i] == target).collect();
    let group2: Vec<usize> = (0..n)
        .filter(|&i| cluster_labels[i] != target && cluster_labels[i] != NOISE)
        .collect();
    log::info!(
        "target cluster {target}: {} vs {} samples",
        group1.len(),
        group2.len()
    );

    let tests: Vec<SupersetTest> = (0..superset.nrows())
        .into_par_iter()
        .map(|j| {
            let row = superset.row(j);
            let (a, b) = (pick(row, &group1), pick(row, &group2));
            Ok(SupersetTest {
                superset: j,
                up: mww_one_tailed(&a, &b, config.shift)?,
                down: mww_one_tailed(&b, &a, config.shift)?,
            })
        })
        .collect::<Result<_>>()?;
    let up_supersets: Vec<(usize, f64)> = tests
        .iter()
        .filter(|t| t.up.p_value < config.p_threshold)
        .map(|t| (t.superset, t.up.p_value))
        .collect();
    let down_supersets: Vec<(usize, f64)> = tests
        .iter()
        .filter(|t| t.down.p_value < config.p_threshold)
        .map(|t| (t.superset, t.down.p_value))
        .collect();

    // gene-set means and PScores do not depend on the superset
    let gene_sets: Vec<(f64, f64, f64)> = (0..geneset.nrows())
        .into_par_iter()
        .map(|i| {
            let row = geneset.row(i);
            let (mu1, mu2) = (mean_of(row, &group1), mean_of(row, &group2));
            let (a, b) = (pick(row, &group1), pick(row, &group2));
            let t = if mu1 >= mu2 {
                mww_one_tailed(&a, &b, config.geneset_shift)?
            } else {
                mww_one_tailed(&b, &a, config.geneset_shift)?
            };
            Ok((mu1, mu2, t.p_value))
        })
        .collect::<Result<_>>()?;

    let significant = up_supersets
        .iter()
        .map(|&(j, p)| (j, p, Direction::Up))
        .chain(down_supersets.iter().map(|&(j, p)| (j, p, Direction::Down)));
    let mut high_impact = Vec::new();
    for (j, p, direction) in significant {
        let weights = model.superset_weights(j);
        let entries: Vec<GsScoreEntry> = gene_sets
            .iter()
            .enumerate()
            .map(|(i, &(mu1, mu2, gp))| GsScoreEntry {
                set_name: model.set_names[i].clone(),
                set_index: i,
                gs_score: gs_score(mu1, mu2, weights[i]),
                weight: weights[i],
                mu1,
                mu2,
                p_value: gp,
                p_score: pscore(gp).value,
            })
            .collect();
        let hi = select_high_impact(&entries, direction)?;
        high_impact.push(SupersetHighImpact {
            superset: j,
            direction,
            p_value: p,
            sd: hi.sd,
            cutoff: hi.cutoff,
            zero_sd: hi.zero_sd,
            entries: hi.selected,
        });
    }

    Ok(SubtypeReport {
        config: config.clone(),
        cluster_labels,
        target_cluster: target,
        group1,
        group2,
        tests,
        up_supersets,
        down_supersets,
        high_impact,
        embedding: embedding.map(|e| e.mapv(|v| v.as_f64())),
    })
}

impl SubtypeReport {
    /// One row per superset and direction.
    pub fn supersets_tsv(&self) -> String {
        let mut out = format!(
            "superset\tdirection\t{}\tsignificant\n",
            TestResult::TSV_HEADER
        );
        for t in &self.tests {
            for (dir, r) in [("up", &t.up), ("down", &t.down)] {
                let sig = r.p_value < self.config.p_threshold;
                out.push_str(&format!(
                    "{}\t{dir}\t{}\t{sig}\n",
                    t.superset,
                    r.tsv_fields()
                ));
            }
        }
        out
    }

    /// One row per high-impact gene set of each significant superset.
    pub fn high_impact_tsv(&self) -> String {
        let mut out = String::from(
            "superset\tdirection\tset_name\tgs_score\tweight\tmu1\tmu2\tp_value\tp_score\n",
        );
        for h in &self.high_impact {
            let dir = match h.direction {
                Direction::Up => "up",
                Direction::Down => "down",
            };
            for e in &h.entries {
                out.push_str(&format!(
                    "{}\t{dir}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    h.superset,
                    e.set_name,
                    e.gs_score,
                    e.weight,
                    e.mu1,
                    e.mu2,
                    fmt(e.p_value),
                    e.p_score
                ));
            }
        }
        out
    }

    pub fn clusters_tsv(&self, sample_ids: &[String]) -> String {
        let mut out = String::from("sample_id\tcluster");
        if self.embedding.is_some() {
            out.push_str("\ttsne1\ttsne2");
        }
        out.push('\n');
        for (i, s) in sample_ids.iter().enumerate() {
            out.push_str(&format!("{s}\t{}", self.cluster_labels[i]));
            if let Some(e) = &self.embedding {
                out.push_str(&format!("\t{}\t{}", e[[i, 0]], e[[i, 1]]));
            }
            out.push('\n');
        }
        out
    }
}
