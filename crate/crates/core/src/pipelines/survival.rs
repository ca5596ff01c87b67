use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{encode_f64, fmt, mean_of};
use crate::dataio::{ClinicalTable, ExpressionMatrix};
use crate::error::{Error, Result};
use crate::netcore::Model;
use crate::scalar::Scalar;
use crate::stats::{
    gs_score, km_curve, logrank, median_split, pscore, GsScoreEntry, KmCurve, SurvivalGroup,
    TestResult,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    pub superset_p: f64,
    pub top_k: usize,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        SurvivalConfig {
            superset_p: 0.001,
            top_k: 20,
        }
    }
}

/// Median-split log-rank result of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSurvival {
    /// Row index of the superset or gene set.
    pub node: usize,
    pub test: Option<TestResult>,
    /// `"high"` or `"low"`: the median-split half with more deaths than
    /// expected.
    pub high_risk: Option<String>,
    /// Why the node could not be tested.
    pub skipped: Option<String>,
    /// Sample indices at or below the median.
    #[serde(skip)]
    pub low: Vec<usize>,
    #[serde(skip)]
    pub high: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurvePair {
    pub superset: usize,
    pub low: KmCurve,
    pub high: KmCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificantSuperset {
    pub superset: usize,
    pub p_value: f64,
    pub high_risk: String,
    /// High-risk half of the superset's median split (the gsScore group 1).
    pub group1: Vec<usize>,
    pub group2: Vec<usize>,
    /// Top gene sets by |gsScore|; `p_value` is the gene set's own
    /// median-split log-rank p (NaN when its split is degenerate).
    pub top: Vec<GsScoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub config: SurvivalConfig,
    pub supersets: Vec<NodeSurvival>,
    /// Ordered by p, smallest first.
    pub significant: Vec<SignificantSuperset>,
    pub geneset_logrank: Vec<NodeSurvival>,
    pub km_curves: Vec<KmCurvePair>,
}

/// Median-split log-rank screen of every superset, with gsScore ranking of
/// the gene sets behind the significant ones.
pub fn survival_pipeline<T: Scalar>(
    model: &Model<T>,
    data: &ExpressionMatrix,
    clinical: &ClinicalTable,
    config: &SurvivalConfig,
) -> Result<SurvivalReport> {
    let records = clinical.for_samples(&data.sample_ids)?;
    let times: Vec<f64> = records.iter().map(|r| f64::from(r.time_days)).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    if !events.iter().any(|&e| e) {
        return Err(Error::Degenerate(
            "no deaths among the analysed samples".into(),
        ));
    }
    let (geneset, superset) = encode_f64(model, data)?;
    let supersets = screen(&superset, &times, &events);
    let geneset_logrank = screen(&geneset, &times, &events);

    let mut ranked: Vec<&NodeSurvival> = supersets
        .iter()
        .filter(|s| s.test.is_some_and(|t| t.p_value < config.superset_p))
        .collect();
    ranked.sort_by(|a, b| {
        a.test
            .unwrap()
            .p_value
            .total_cmp(&b.test.unwrap().p_value)
            .then(a.node.cmp(&b.node))
    });

    let mut significant = Vec::new();
    let mut km_curves = Vec::new();
    for s in ranked {
        let high_risk = s.high_risk.clone().unwrap();
        let (group1, group2) = if high_risk == "high" {
            (s.high.clone(), s.low.clone())
        } else {
            (s.low.clone(), s.high.clone())
        };
        let weights = model.superset_weights(s.node);
        let mut entries: Vec<GsScoreEntry> = (0..geneset.nrows())
            .map(|i| {
                let row = geneset.row(i);
                let (mu1, mu2) = (mean_of(row, &group1), mean_of(row, &group2));
                let p = geneset_logrank[i].test.map_or(f64::NAN, |t| t.p_value);
                GsScoreEntry {
                    set_name: model.set_names[i].clone(),
                    set_index: i,
                    gs_score: gs_score(mu1, mu2, weights[i]),
                    weight: weights[i],
                    mu1,
                    mu2,
                    p_value: p,
                    p_score: if p.is_nan() {
                        f64::NAN
                    } else {
                        pscore(p).value
                    },
                }
            })
            .collect();
        entries.sort_by(|a, b| {
            b.gs_score
                .abs()
                .total_cmp(&a.gs_score.abs())
                .then(a.set_index.cmp(&b.set_index))
        });
        entries.truncate(config.top_k);
        km_curves.push(KmCurvePair {
            superset: s.node,
            low: km_curve(&group(&s.low, &times, &events)),
            high: km_curve(&group(&s.high, &times, &events)),
        });
        significant.push(SignificantSuperset {
            superset: s.node,
            p_value: s.test.unwrap().p_value,
            high_risk,
            group1,
            group2,
            top: entries,
        });
    }
    log::info!(
        "{} of {} supersets significant at p < {}",
        significant.len(),
        supersets.len(),
        config.superset_p
    );
    Ok(SurvivalReport {
        config: config.clone(),
        supersets,
        significant,
        geneset_logrank,
        km_curves,
    })
}

fn group(idx: &[usize], times: &[f64], events: &[bool]) -> SurvivalGroup {
    SurvivalGroup {
        times: idx.iter().map(|&i| times[i]).collect(),
        events: idx.iter().map(|&i| events[i]).collect(),
    }
}

/// Median split and log-rank test of every row of `nodes`.
pub(crate) fn screen(
    nodes: &ndarray::Array2<f64>,
    times: &[f64],
    events: &[bool],
) -> Vec<NodeSurvival> {
    (0..nodes.nrows())
        .into_par_iter()
        .map(|j| {
            let values = nodes.row(j).to_vec();
            let mut out = NodeSurvival {
                node: j,
                test: None,
                high_risk: None,
                skipped: None,
                low: vec![],
                high: vec![],
            };
            let (low, high) = match median_split(&values) {
                Ok(split) => split,
                Err(e) => {
                    out.skipped = Some(e.to_string());
                    return out;
                }
            };
            match logrank(&group(&low, times, events), &group(&high, times, events)) {
                Ok(lr) => {
                    out.test = Some(lr.result);
                    out.high_risk = Some(
                        if lr.high_risk_group() == 1 {
                            "high"
                        } else {
                            "low"
                        }
                        .to_string(),
                    );
                }
                Err(e) => out.skipped = Some(e.to_string()),
            }
            out.low = low;
            out.high = high;
            out
        })
        .collect()
}

impl SurvivalReport {
    pub fn supersets_tsv(&self) -> String {
        node_tsv("superset", &self.supersets, self.config.superset_p)
    }

    pub fn genesets_tsv(&self, set_names: &[String]) -> String {
        let mut out = format!(
            "set_index\tset_name\t{}\thigh_risk\tskipped\n",
            TestResult::TSV_HEADER
        );
        for (s, name) in self.geneset_logrank.iter().zip(set_names) {
            out.push_str(&format!("{}\t{name}\t{}\n", s.node, node_fields(s)));
        }
        out
    }

    /// Top gene sets of each significant superset, in rank order.
    pub fn top_tsv(&self) -> String {
        let mut out = String::from(
            "superset\tsuperset_p_value\trank\tset_name\tgs_score\tweight\tmu1\tmu2\tgeneset_logrank_p\tp_score\n",
        );
        for s in &self.significant {
            for (r, e) in s.top.iter().enumerate() {
                out.push_str(&format!(
                    "{}\t{:e}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    s.superset,
                    s.p_value,
                    r + 1,
                    e.set_name,
                    e.gs_score,
                    e.weight,
                    e.mu1,
                    e.mu2,
                    fmt(e.p_value),
                    fmt(e.p_score)
                ));
            }
        }
        out
    }

    /// Kaplan-Meier step functions of both halves of each significant
    /// superset.
    pub fn km_tsv(&self) -> String {
        let mut out = String::from("superset\tgroup\ttime\tsurvival\tat_risk\tevents\n");
        for c in &self.km_curves {
            for (name, curve) in [("low", &c.low), ("high", &c.high)] {
                for s in &curve.steps {
                    out.push_str(&format!(
                        "{}\t{name}\t{}\t{}\t{}\t{}\n",
                        c.superset, s.time, s.survival, s.at_risk, s.events
                    ));
                }
            }
        }
        out
    }
}

fn node_fields(s: &NodeSurvival) -> String {
    let test = s
        .test
        .map_or_else(|| "NA\tNA\tNA".to_string(), |t| t.tsv_fields());
    format!(
        "{test}\t{}\t{}",
        s.high_risk.as_deref().unwrap_or("NA"),
        s.skipped.as_deref().unwrap_or("")
    )
}

fn node_tsv(kind: &str, nodes: &[NodeSurvival], threshold: f64) -> String {
    let mut out = format!(
        "{kind}\t{}\thigh_risk\tskipped\tsignificant\n",
        TestResult::TSV_HEADER
    );
    for s in nodes {
        let sig = s.test.is_some_and(|t| t.p_value < threshold);
        out.push_str(&format!("{}\t{}\t{sig}\n", s.node, node_fields(s)));
    }
    out
}
