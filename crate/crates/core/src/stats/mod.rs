//! Statistical primitives used by the analysis pipelines.

mod mww;
mod scores;
mod survival;

use libm::erfc;
use serde::{Deserialize, Serialize};

pub use mww::{mww_normal_approx, mww_one_tailed, EXACT_MAX_POOLED};
pub use scores::{
    gs_score, jaccard, jaccard_from_counts, median_split, pscore, select_high_impact,
    two_prop_ztest, Direction, GsScoreEntry, HighImpact, Jaccard, PScore, PSCORE_FLOOR,
};
pub use survival::{km_curve, logrank, KmCurve, KmStep, LogRank, SurvivalGroup, LOGRANK_EXACT_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Mann-Whitney with the exact permutation distribution of the rank sum.
    MwwExact,
    /// Mann-Whitney with the tie-corrected normal approximation.
    MwwNormal,
    /// Log-rank with the exact permutation distribution of the statistic.
    LogRankPermutation,
    /// Log-rank with the chi-square (1 df) reference distribution.
    LogRankChiSquare,
    TwoProportionZ,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MwwExact => "mww_exact",
            Method::MwwNormal => "mww_normal",
            Method::LogRankPermutation => "logrank_permutation",
            Method::LogRankChiSquare => "logrank_chisq",
            Method::TwoProportionZ => "two_prop_z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    /// Location shift, Mann-Whitney only.
    pub shift: Option<f64>,
}

impl TestResult {
    pub const TSV_HEADER: &'static str = "statistic\tp_value\tmethod";

    pub fn tsv_fields(&self) -> String {
        format!(
            "{}\t{:e}\t{}",
            self.statistic,
            self.p_value,
            self.method.as_str()
        )
    }
}

/// Upper tail of the standard normal, accurate far into the tail.
pub fn normal_sf(z: f64) -> f64 {
    (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0)
}

/// Upper tail of chi-square with one degree of freedom.
pub fn chisq1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    erfc((x / 2.0).sqrt()).clamp(0.0, 1.0)
}

/// Midranks (1-based) of `values`; tied values share their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
