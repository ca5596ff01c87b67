//! Synthetic expression cohorts with known ground truth.
//!
//! Genes are split into disjoint blocks, one block per gene set; genes left
//! over are background. Each set has a per-sample latent factor `f ~ N(0, 1)`
//! and its genes are `base + factor_sd · f + noise`, `noise ~ N(0, noise_sd²)`,
//! with a gene-specific base level drawn from `[base_min, base_max)`, clipped at
//! zero. Background
//! genes carry noise only.
//!
//! * Groups: with two groups, group 1 is the minority (`minority_fraction`)
//!   and every planted gene is shifted up by `effect` within-group standard
//!   deviations, `σ = sqrt(factor_sd² + noise_sd²)`, in it. With
//!   more groups, planted set `k` is shifted in group `k mod G`, so every
//!   group has its own signature.
//! * Hazard: `single` ties the log-hazard to the factor of the first planted
//!   set; `distributed` gives the planted sets a shared component `F`
//!   (correlation `shared_loading`) and ties the log-hazard to `F`.
//!   Survival times are exponential with `log_hazard_ratio` per unit of the
//!   driver, uniformly censored, then capped at five years.

use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    apply_cap, ClinicalRecord, ClinicalTable, ExpressionMatrix, GeneSet, DEFAULT_CAP_DAYS,
};
use crate::error::{Error, Result};
use crate::genesets::GeneSetCollection;
use crate::rng;

const BASE_RANGE: (f64, f64) = (2.0, 6.0);
const FACTOR_SD: f64 = 1.0;
const NOISE_SD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardLink {
    None,
    Single,
    Distributed,
}

impl FromStr for HazardLink {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(HazardLink::None),
            "single" => Ok(HazardLink::Single),
            "distributed" => Ok(HazardLink::Distributed),
            _ => Err(Error::Config(format!(
                "unknown hazard link `{s}` (none, single, distributed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_genes: usize,
    pub n_sets: usize,
    pub planted: usize,
    /// Group shift of planted genes, in within-group standard deviations.
    pub effect: f64,
    pub n_groups: usize,
    pub minority_fraction: f64,
    pub base_min: f64,
    pub base_max: f64,
    pub factor_sd: f64,
    pub noise_sd: f64,
    pub hazard: HazardLink,
    pub log_hazard_ratio: f64,
    pub shared_loading: f64,
    pub baseline_median_days: f64,
    pub censor_max_days: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 200,
            n_genes: 300,
            n_sets: 30,
            planted: 5,
            effect: 2.0,
            n_groups: 2,
            minority_fraction: 0.3,
            base_min: BASE_RANGE.0,
            base_max: BASE_RANGE.1,
            factor_sd: FACTOR_SD,
            noise_sd: NOISE_SD,
            hazard: HazardLink::None,
            log_hazard_ratio: 1.0,
            shared_loading: 0.8,
            baseline_median_days: 900.0,
            censor_max_days: 3650.0,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub expression: ExpressionMatrix,
    pub genesets: GeneSetCollection,
    /// Includes a `group` label column.
    pub clinical: ClinicalTable,
    pub groups: Vec<usize>,
    /// Names of the group-shifted sets, in ascending set order.
    pub planted: Vec<String>,
    /// Names of the sets whose factors drive the hazard.
    pub hazard_sets: Vec<String>,
}

pub fn synth(config: &SynthConfig) -> Result<SynthData> {
    let c = config;
    if c.n_sets == 0 || c.n_genes < 2 * c.n_sets {
        return Err(Error::Config(
            "synthetic data needs at least two genes per gene set".into(),
        ));
    }
    if c.planted > c.n_sets || c.n_groups < 2 || c.n_samples < 2 * c.n_groups {
        return Err(Error::Config(
            "inconsistent planted-set, group or sample counts".into(),
        ));
    }
    if c.hazard != HazardLink::None && c.planted == 0 {
        return Err(Error::Config(
            "a hazard link needs at least one planted set".into(),
        ));
    }
    let mut rng = rng::stream(c.seed, rng::streams::SYNTH);
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    if !(c.factor_sd >= 0.0 && c.noise_sd >= 0.0 && c.factor_sd + c.noise_sd > 0.0) {
        return Err(Error::Config(
            "factor_sd and noise_sd must be non-negative and not both zero".into(),
        ));
    }
    if !(c.base_min >= 0.0 && c.base_min < c.base_max) {
        return Err(Error::Config(
            "base levels need 0 <= base_min < base_max".into(),
        ));
    }
    let sigma = c.factor_sd.hypot(c.noise_sd);
    let block = c.n_genes / c.n_sets;
    let gene_ids: Vec<String> = (0..c.n_genes).map(|g| format!("G{:04}", g + 1)).collect();
    let sample_ids: Vec<String> = (0..c.n_samples).map(|i| format!("S{:04}", i + 1)).collect();
    let set_names: Vec<String> = (0..c.n_sets).map(|s| format!("GS_{:03}", s + 1)).collect();

    let mut planted: Vec<usize> = (0..c.n_sets).collect::<Vec<_>>();
    planted.shuffle(&mut rng);
    planted.truncate(c.planted);
    planted.sort_unstable();

    let groups: Vec<usize> = {
        let mut g: Vec<usize> = if c.n_groups == 2 {
            let n1 = ((c.n_samples as f64) * c.minority_fraction).round() as usize;
            (0..c.n_samples).map(|i| usize::from(i < n1)).collect()
        } else {
            (0..c.n_samples).map(|i| i % c.n_groups).collect()
        };
        g.shuffle(&mut rng);
        g
    };
    let shifted_group = |k: usize| if c.n_groups == 2 { 1 } else { k % c.n_groups };

    let shared: Vec<f64> = (0..c.n_samples).map(|_| std.sample(&mut rng)).collect();
    let rho = c.shared_loading;
    let mut factors = Array2::<f64>::zeros((c.n_sets, c.n_samples));
    for s in 0..c.n_sets {
        let distributed = c.hazard == HazardLink::Distributed && planted.contains(&s);
        for i in 0..c.n_samples {
            let u = std.sample(&mut rng);
            factors[[s, i]] = if distributed {
                rho * shared[i] + (1.0 - rho * rho).sqrt() * u
            } else {
                u
            };
        }
    }

    let mut values = Array2::<f64>::zeros((c.n_genes, c.n_samples));
    for g in 0..c.n_genes {
        let base = rng.random_range(c.base_min..c.base_max);
        let set = (g / block < c.n_sets).then_some(g / block);
        let shift_in = set
            .and_then(|s| planted.iter().position(|&p| p == s))
            .map(shifted_group);
        for i in 0..c.n_samples {
            let mut v = base + c.noise_sd * std.sample(&mut rng);
            if let Some(s) = set {
                v += c.factor_sd * factors[[s, i]];
            }
            if shift_in == Some(groups[i]) {
                v += c.effect * sigma;
            }
            values[[g, i]] = v.max(0.0);
        }
    }

    let sets: Vec<GeneSet> = (0..c.n_sets)
        .map(|s| {
            let desc = if planted.contains(&s) {
                "planted"
            } else {
                "background"
            };
            GeneSet::new(
                set_names[s].clone(),
                desc,
                gene_ids[s * block..(s + 1) * block].iter().cloned(),
            )
        })
        .collect();

    let hazard_driver: Option<Vec<f64>> = match c.hazard {
        HazardLink::None => None,
        HazardLink::Single => Some(factors.row(planted[0]).to_vec()),
        HazardLink::Distributed => Some(shared.clone()),
    };
    let hazard_sets: Vec<String> = match c.hazard {
        HazardLink::None => vec![],
        HazardLink::Single => vec![set_names[planted[0]].clone()],
        HazardLink::Distributed => planted.iter().map(|&s| set_names[s].clone()).collect(),
    };
    let base_rate = std::f64::consts::LN_2 / c.baseline_median_days;
    let records = (0..c.n_samples)
        .map(|i| {
            let lh = hazard_driver
                .as_ref()
                .map_or(0.0, |h| c.log_hazard_ratio * h[i]);
            let t = Exp::new(base_rate * lh.exp())
                .expect("positive rate")
                .sample(&mut rng);
            let censor = rng.random_range(0.0..c.censor_max_days);
            let (time, event) = if t <= censor {
                (t, true)
            } else {
                (censor, false)
            };
            ClinicalRecord {
                sample_id: sample_ids[i].clone(),
                time_days: time.round() as u32,
                event,
                labels: [("group".to_string(), format!("g{}", groups[i]))]
                    .into_iter()
                    .collect(),
            }
        })
        .collect();
    let clinical = apply_cap(
        ClinicalTable {
            records,
            label_columns: vec!["group".to_string()],
        },
        DEFAULT_CAP_DAYS,
    );

    Ok(SynthData {
        expression: ExpressionMatrix::new(gene_ids, sample_ids, values)?,
        genesets: GeneSetCollection::new(sets)?,
        clinical,
        groups,
        planted: planted.iter().map(|&s| set_names[s].clone()).collect(),
        hazard_sets,
    })
}
