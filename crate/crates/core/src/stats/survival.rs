use serde::{Deserialize, Serialize};

use super::{chisq1_sf, Method, TestResult};
use crate::error::{Error, Result};

/// Pooled sizes up to this use the exact permutation distribution.
pub const LOGRANK_EXACT_MAX: usize = 12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurvivalGroup {
    /// Follow-up time in days.
    pub times: Vec<f64>,
    /// `true` = death observed, `false` = censored.
    pub events: Vec<bool>,
}

impl SurvivalGroup {
    pub fn new(times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::Shape(format!(
                "{} times but {} event flags",
                times.len(),
                events.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Domain(
                "survival times must be finite and non-negative".into(),
            ));
        }
        Ok(SurvivalGroup { times, events })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|e| **e).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRank {
    pub result: TestResult,
    pub observed: [f64; 2],
    pub expected: [f64; 2],
}

impl LogRank {
    pub fn p_value(&self) -> f64 {
        self.result.p_value
    }

    /// Index (0 or 1) of the group with more deaths than expected.
    pub fn high_risk_group(&self) -> usize {
        let ratio = |g: usize| {
            if self.expected[g] > 0.0 {
                self.observed[g] / self.expected[g]
            } else {
                0.0
            }
        };
        usize::from(ratio(1) > ratio(0))
    }
}

struct Pooled {
    /// Distinct event times, ascending.
    event_times: Vec<f64>,
}

impl Pooled {
    fn new(groups: [&SurvivalGroup; 2]) -> Self {
        let mut event_times: Vec<f64> = groups
            .iter()
            .flat_map(|g| {
                g.times
                    .iter()
                    .zip(&g.events)
                    .filter(|(_, &e)| e)
                    .map(|(&t, _)| t)
            })
            .collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        Pooled { event_times }
    }

    /// `(O1 - E1, variance, O1, E1)` for a group-1 membership vector over
    /// the original (unsorted) subject order.
    fn score(&self, groups: [&SurvivalGroup; 2], in_first: &[bool]) -> (f64, f64, f64, f64) {
        let times = groups[0].times.iter().chain(&groups[1].times);
        let events = groups[0].events.iter().chain(&groups[1].events);
        let (mut o1, mut e1, mut var) = (0.0, 0.0, 0.0);
        let subjects: Vec<(f64, bool, bool)> = times
            .zip(events)
            .zip(in_first)
            .map(|((&t, &e), &g)| (t, e, g))
            .collect();
        for &t in &self.event_times {
            let (mut n, mut n1, mut d, mut d1) = (0.0, 0.0, 0.0, 0.0);
            for &(ti, ei, gi) in &subjects {
                if ti >= t {
                    n += 1.0;
                    if gi {
                        n1 += 1.0;
                    }
                    if ti == t && ei {
                        d += 1.0;
                        if gi {
                            d1 += 1.0;
                        }
                    }
                }
            }
            o1 += d1;
            e1 += d * n1 / n;
            if n > 1.0 {
                var += n1 * (n - n1) * d * (n - d) / (n * n * (n - 1.0));
            }
        }
        (o1 - e1, var, o1, e1)
    }
}

fn chi_square(diff: f64, var: f64) -> f64 {
    if var > 0.0 {
        diff * diff / var
    } else {
        0.0
    }
}

/// Two-group log-rank test (two-sided, 1 df).
///
/// Pooled samples of at most [`LOGRANK_EXACT_MAX`] subjects get the exact
/// permutation p-value: the share of all ways to relabel subjects (keeping
/// group sizes) whose statistic reaches the observed one. Larger samples use
/// the chi-square reference distribution.
pub fn logrank(g1: &SurvivalGroup, g2: &SurvivalGroup) -> Result<LogRank> {
    if g1.is_empty() || g2.is_empty() {
        return Err(Error::Degenerate(
            "log-rank test needs two non-empty groups".into(),
        ));
    }
    if g1.n_events() + g2.n_events() == 0 {
        return Err(Error::Degenerate(
            "log-rank test is undefined without events".into(),
        ));
    }
    let groups = [g1, g2];
    let pooled = Pooled::new(groups);
    let n = g1.len() + g2.len();
    let labels: Vec<bool> = (0..n).map(|i| i < g1.len()).collect();
    let (diff, var, o1, e1) = pooled.score(groups, &labels);
    let statistic = chi_square(diff, var);
    let total_events = (g1.n_events() + g2.n_events()) as f64;
    let observed = [o1, total_events - o1];
    let expected = [e1, total_events - e1];

    let (p_value, method) = if n <= LOGRANK_EXACT_MAX {
        (
            permutation_p(&pooled, groups, g1.len(), statistic),
            Method::LogRankPermutation,
        )
    } else {
        (chisq1_sf(statistic), Method::LogRankChiSquare)
    };
    Ok(LogRank {
        result: TestResult {
            statistic,
            p_value,
            method,
            shift: None,
        },
        observed,
        expected,
    })
}

fn permutation_p(pooled: &Pooled, groups: [&SurvivalGroup; 2], n1: usize, observed: f64) -> f64 {
    let n = groups[0].len() + groups[1].len();
    let tol = 1e-9 * observed.max(1.0);
    let (mut hits, mut total) = (0u64, 0u64);
    // Gosper's hack over n-bit masks with n1 bits set
    let mut mask: u32 = (1u32 << n1) - 1;
    let limit: u32 = 1u32 << n;
    let mut labels = vec![false; n];
    while mask < limit {
        for (i, l) in labels.iter_mut().enumerate() {
            *l = mask >> i & 1 == 1;
        }
        let (diff, var, _, _) = pooled.score(groups, &labels);
        total += 1;
        if chi_square(diff, var) >= observed - tol {
            hits += 1;
        }
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    hits as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub survival: f64,
    pub at_risk: usize,
    pub events: usize,
}

/// Product-limit survival estimate as a right-continuous step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Starts at `(0, 1.0)`; one further step per distinct event time.
    pub steps: Vec<KmStep>,
}

impl KmCurve {
    /// Survival probability just after time `t`.
    pub fn at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }
}

pub fn km_curve(g: &SurvivalGroup) -> KmCurve {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g.times[a].total_cmp(&g.times[b]));
    let mut steps = vec![KmStep {
        time: 0.0,
        survival: 1.0,
        at_risk: g.len(),
        events: 0,
    }];
    let mut survival = 1.0;
    let mut at_risk = g.len();
    let mut i = 0;
    while i < order.len() {
        let t = g.times[order[i]];
        let tied = order[i..].iter().take_while(|&&k| g.times[k] == t).count();
        let deaths = order[i..i + tied].iter().filter(|&&k| g.events[k]).count();
        if deaths > 0 {
            survival *= 1.0 - deaths as f64 / at_risk as f64;
            steps.push(KmStep {
                time: t,
                survival,
                at_risk,
                events: deaths,
            });
        }
        at_risk -= tied;
        i += tied;
    }
    KmCurve { steps }
}
