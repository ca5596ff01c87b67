use super::{midranks, normal_sf, Method, TestResult};
use crate::error::{Error, Result};

/// Pooled sizes up to this use the exact permutation distribution.
pub const EXACT_MAX_POOLED: usize = 12;

struct Ranked {
    /// Mann-Whitney U of `x` (pairs with x - shift > y, ties count half).
    u: f64,
    /// Midranks of the pooled sample, `x` first.
    ranks: Vec<f64>,
    n: usize,
    m: usize,
}

fn rank(x: &[f64], y: &[f64], shift: f64) -> Result<Ranked> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Domain(
            "Mann-Whitney test needs two non-empty samples".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) || !shift.is_finite() {
        return Err(Error::Domain("Mann-Whitney input must be finite".into()));
    }
    let pooled: Vec<f64> = x
        .iter()
        .map(|v| v - shift)
        .chain(y.iter().copied())
        .collect();
    let ranks = midranks(&pooled);
    let n = x.len();
    let rank_sum: f64 = ranks[..n].iter().sum();
    let u = rank_sum - (n * (n + 1)) as f64 / 2.0;
    Ok(Ranked {
        u,
        ranks,
        n,
        m: y.len(),
    })
}

/// One-tailed Mann-Whitney-Wilcoxon test of H1: `x` is stochastically
/// greater than `y + shift`.
///
/// The shift is subtracted from every `x` before ranking. Pooled samples of
/// at most [`EXACT_MAX_POOLED`] use the exact permutation distribution of
/// the midrank sum (ties included); larger samples use the normal
/// approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn mww_one_tailed(x: &[f64], y: &[f64], shift: f64) -> Result<TestResult> {
    let r = rank(x, y, shift)?;
    if r.n + r.m <= EXACT_MAX_POOLED {
        Ok(TestResult {
            statistic: r.u,
            p_value: exact_upper_tail(&r),
            method: Method::MwwExact,
            shift: Some(shift),
        })
    } else {
        Ok(TestResult {
            statistic: r.u,
            p_value: normal_upper_tail(&r),
            method: Method::MwwNormal,
            shift: Some(shift),
        })
    }
}

/// The normal-approximation p-value regardless of sample size.
pub fn mww_normal_approx(x: &[f64], y: &[f64], shift: f64) -> Result<TestResult> {
    let r = rank(x, y, shift)?;
    Ok(TestResult {
        statistic: r.u,
        p_value: normal_upper_tail(&r),
        method: Method::MwwNormal,
        shift: Some(shift),
    })
}

fn normal_upper_tail(r: &Ranked) -> f64 {
    let (n, m) = (r.n as f64, r.m as f64);
    let total = n + m;
    let mut sorted = r.ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * m / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        // every value tied: no evidence either way
        return 1.0;
    }
    normal_sf((r.u - n * m / 2.0 - 0.5) / var.sqrt())
}

/// P(rank sum of `x` >= observed) over all equally likely assignments of
/// the pooled midranks to `x`. Doubled midranks are integers, so the
/// distribution is counted exactly.
fn exact_upper_tail(r: &Ranked) -> f64 {
    let doubled: Vec<usize> = r.ranks.iter().map(|v| (v * 2.0).round() as usize).collect();
    let observed: usize = doubled[..r.n].iter().sum();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled-rank sum s
    let mut ways = vec![vec![0f64; max_sum + 1]; r.n + 1];
    ways[0][0] = 1.0;
    for &d in &doubled {
        for k in (1..=r.n).rev() {
            for s in (d..=max_sum).rev() {
                let prev = ways[k - 1][s - d];
                if prev != 0.0 {
                    ways[k][s] += prev;
                }
            }
        }
    }
    let total: f64 = ways[r.n].iter().sum();
    let tail: f64 = ways[r.n][observed..].iter().sum();
    (tail / total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn exact_examples() {
        let r = mww_one_tailed(&[3., 4., 5.], &[1., 2.], 0.0).unwrap();
        assert_eq!(r.method, Method::MwwExact);
        assert_eq!(r.statistic, 6.0);
        assert!((r.p_value - 0.1).abs() < 1e-12);

        let same = [1., 2., 3., 4.];
        assert!(mww_one_tailed(&same, &same, 0.0).unwrap().p_value >= 0.5);

        let far = mww_one_tailed(&[10., 11.], &[1., 2.], 100.0).unwrap();
        assert!(far.p_value > 0.9);
    }

    #[test]
    fn large_samples_use_normal() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 + 0.5).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let r = mww_one_tailed(&x, &y, 0.0).unwrap();
        assert_eq!(r.method, Method::MwwNormal);
        // U = 210; sd = sqrt(20*20*41/12)
        let z = (210.0 - 200.0 - 0.5) / (400.0 * 41.0 / 12.0f64).sqrt();
        assert!((r.p_value - normal_sf(z)).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(matches!(
            mww_one_tailed(&[], &[1.0], 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn all_tied_is_uninformative() {
        let v = vec![2.0; 15];
        assert_eq!(mww_one_tailed(&v, &v, 0.0).unwrap().p_value, 1.0);
    }

    proptest! {
        #[test]
        fn mirrored_exact_tails_cover_one(
            x in prop::collection::vec(0i32..6, 1..6),
            y in prop::collection::vec(0i32..6, 1..6),
            s in -2i32..3,
        ) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let a = mww_one_tailed(&x, &y, s as f64).unwrap().p_value;
            let b = mww_one_tailed(&y, &x, -(s as f64)).unwrap().p_value;
            prop_assert!(a + b >= 1.0 - 1e-12);
        }

        #[test]
        fn mirrored_normal_tails(
            x in prop::collection::vec(-5.0f64..5.0, 15..30),
            y in prop::collection::vec(-5.0f64..5.0, 15..30),
        ) {
            let a = mww_normal_approx(&x, &y, 0.3).unwrap().p_value;
            let b = mww_normal_approx(&y, &x, -0.3).unwrap().p_value;
            // the continuity correction leaves a gap of at most 1/(sd*sqrt(2 pi))
            prop_assert!(a + b >= 1.0 - 1e-12 && a + b - 1.0 <= 0.02);
        }

        #[test]
        fn p_monotone_in_shift(
            x in prop::collection::vec(-5.0f64..5.0, 1..25),
            y in prop::collection::vec(-5.0f64..5.0, 1..25),
            s1 in -3.0f64..3.0, ds in 0.0f64..3.0,
        ) {
            let p1 = mww_one_tailed(&x, &y, s1).unwrap().p_value;
            let p2 = mww_one_tailed(&x, &y, s1 + ds).unwrap().p_value;
            prop_assert!(p1 <= p2 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&p1));
        }
    }
}
