use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{normal_sf, sample_sd, Method, TestResult};
use crate::error::{Error, Result};

pub const PSCORE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PScore {
    pub value: f64,
    /// The p-value was at or below zero (or non-finite) and was clamped.
    pub clamped: bool,
}

/// `-log10(p)`, with p clamped below at [`PSCORE_FLOOR`].
pub fn pscore(p: f64) -> PScore {
    let clamped = !(p > 0.0);
    PScore {
        value: -p.max(PSCORE_FLOOR).log10(),
        clamped,
    }
}

/// Contribution of a gene set to a superset: group mean difference of the
/// gene-set activation times the gene-set -> superset weight.
#[inline]
pub fn gs_score(mu1: f64, mu2: f64, weight: f64) -> f64 {
    (mu1 - mu2) * weight
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsScoreEntry {
    pub set_name: String,
    pub set_index: usize,
    pub gs_score: f64,
    pub weight: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// p-value of the gene-set level test reported next to the score.
    pub p_value: f64,
    pub p_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighImpact {
    /// Sorted by |gs_score|, largest first.
    pub selected: Vec<GsScoreEntry>,
    pub sd: f64,
    pub cutoff: f64,
    /// Scores had zero spread; nothing can be selected.
    pub zero_sd: bool,
}

/// Keeps entries beyond two sample standard deviations of all scores in the
/// superset: `> 2 sd` for up, `< -2 sd` for down.
pub fn select_high_impact(entries: &[GsScoreEntry], direction: Direction) -> Result<HighImpact> {
    if entries.len() < 2 {
        return Err(Error::Domain(
            "high-impact selection needs at least two gene sets".into(),
        ));
    }
    let scores: Vec<f64> = entries.iter().map(|e| e.gs_score).collect();
    let sd = sample_sd(&scores);
    let cutoff = 2.0 * sd;
    if sd == 0.0 {
        return Ok(HighImpact {
            selected: vec![],
            sd,
            cutoff,
            zero_sd: true,
        });
    }
    let mut selected: Vec<GsScoreEntry> = entries
        .iter()
        .filter(|e| match direction {
            Direction::Up => e.gs_score > cutoff,
            Direction::Down => e.gs_score < -cutoff,
        })
        .cloned()
        .collect();
    selected.sort_by(|a, b| {
        b.gs_score
            .abs()
            .total_cmp(&a.gs_score.abs())
            .then(a.set_index.cmp(&b.set_index))
    });
    Ok(HighImpact {
        selected,
        sd,
        cutoff,
        zero_sd: false,
    })
}

/// Splits sample indices at the median (midpoint of the sorted values).
/// Values at or below the median go to the low group.
pub fn median_split(values: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    if values.len() < 4 {
        return Err(Error::Degenerate(format!(
            "median split needs at least 4 samples, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let (low, high): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| values[i] <= median);
    if low.is_empty() || high.is_empty() {
        return Err(Error::Degenerate(
            "median split leaves an empty group".into(),
        ));
    }
    Ok((low, high))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jaccard {
    pub value: f64,
    /// Both sets were empty; the index is reported as 0.
    pub both_empty: bool,
}

pub fn jaccard<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> Jaccard {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Jaccard {
            value: 0.0,
            both_empty: true,
        };
    }
    Jaccard {
        value: inter as f64 / union as f64,
        both_empty: false,
    }
}

/// Jaccard index from an overlap count and the two set sizes.
pub fn jaccard_from_counts(overlap: usize, n_a: usize, n_b: usize) -> Result<Jaccard> {
    if overlap > n_a.min(n_b) {
        return Err(Error::Domain(format!(
            "overlap {overlap} exceeds set sizes {n_a}, {n_b}"
        )));
    }
    let union = n_a + n_b - overlap;
    if union == 0 {
        return Ok(Jaccard {
            value: 0.0,
            both_empty: true,
        });
    }
    Ok(Jaccard {
        value: overlap as f64 / union as f64,
        both_empty: false,
    })
}

/// Pooled two-proportion z-test, one-sided for H1: `k1/n1 > k2/n2`.
pub fn two_prop_ztest(k1: usize, n1: usize, k2: usize, n2: usize) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Domain(
            "two-proportion test needs non-empty groups".into(),
        ));
    }
    if k1 > n1 || k2 > n2 {
        return Err(Error::Domain("success count exceeds group size".into()));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let (p1, p2) = (k1 as f64 / n1f, k2 as f64 / n2f);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = if se > 0.0 { (p1 - p2) / se } else { 0.0 };
    Ok(TestResult {
        statistic: z,
        p_value: normal_sf(z),
        method: Method::TwoProportionZ,
        shift: None,
    })
}
