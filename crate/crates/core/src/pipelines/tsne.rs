//! Exact (O(n²) per iteration) t-SNE.

use ndarray::{Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::pca::pca;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    /// Early exaggeration and the low momentum apply before this iteration.
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    /// Project onto this many principal components first, if the input is
    /// wider.
    pub pca_dims: Option<usize>,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            pca_dims: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tsne<T> {
    /// `[n, 2]`
    pub embedding: Array2<T>,
    /// KL divergence of the random starting layout.
    pub kl_start: f64,
    /// KL divergence when early exaggeration ends (the start layout if the
    /// run never leaves the exaggeration phase).
    pub kl_initial: f64,
    pub kl_final: f64,
}

const ENTROPY_TOL: f64 = 1e-5;
const BANDWIDTH_STEPS: usize = 50;
const MIN_GAIN: f64 = 0.01;

/// Embeds the rows of `points` (`[n, d]`) in two dimensions.
pub fn tsne_exact<T: Scalar>(points: ArrayView2<T>, config: &TsneConfig) -> Result<Tsne<T>> {
    let n = points.nrows();
    if !(config.perplexity > 0.0) || (n as f64) < 3.0 * config.perplexity {
        return Err(Error::Config(format!(
            "t-SNE with perplexity {} needs at least {} points, got {n}",
            config.perplexity,
            (3.0 * config.perplexity).ceil()
        )));
    }
    let reduced;
    let points = match config.pca_dims {
        Some(k) if points.ncols() > k => {
            reduced = pca(points.t(), k)?.scores.reversed_axes();
            reduced.view()
        }
        _ => points,
    };

    let p = joint_probabilities(points, config.perplexity);
    let mut rng = rng::stream(config.seed, rng::streams::TSNE);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y = Array2::<T>::from_shape_fn((n, 2), |_| T::of(normal.sample(&mut rng)));
    let mut update = Array2::<T>::zeros((n, 2));
    let mut gains = Array2::<T>::ones((n, 2));
    let eta = T::of(config.learning_rate);
    let kl_start = kl_divergence(&p, &y);
    let mut kl_initial = kl_start;

    let mut num = Array2::<T>::zeros((n, n));
    let mut grad = Array2::<T>::zeros((n, 2));
    for iter in 0..config.iterations {
        if iter == config.exaggeration_iters && iter > 0 {
            kl_initial = kl_divergence(&p, &y);
        }
        let exaggerating = iter < config.exaggeration_iters;
        let exag = T::of(if exaggerating {
            config.exaggeration
        } else {
            1.0
        });
        let momentum = T::of(if exaggerating {
            config.momentum
        } else {
            config.final_momentum
        });

        let z = student_kernel(&y, &mut num);
        grad.fill(T::zero());
        for i in 0..n {
            let (mut gx, mut gy) = (T::zero(), T::zero());
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exag * p[[i, j]] - num[[i, j]] / z) * num[[i, j]];
                gx += w * (y[[i, 0]] - y[[j, 0]]);
                gy += w * (y[[i, 1]] - y[[j, 1]]);
            }
            grad[[i, 0]] = T::of(4.0) * gx;
            grad[[i, 1]] = T::of(4.0) * gy;
        }

        for ((g, u), d) in gains.iter_mut().zip(update.iter_mut()).zip(grad.iter()) {
            *g = if (*d > T::zero()) != (*u > T::zero()) {
                *g + T::of(0.2)
            } else {
                *g * T::of(0.8)
            };
            if *g < T::of(MIN_GAIN) {
                *g = T::of(MIN_GAIN);
            }
            *u = momentum * *u - eta * *g * *d;
        }
        y += &update;
        let mean = y.mean_axis(Axis(0)).unwrap();
        y -= &mean.insert_axis(Axis(0));
    }
    let kl_final = kl_divergence(&p, &y);
    log::debug!(
        "t-SNE KL: start {kl_start:.4}, after exaggeration {kl_initial:.4}, final {kl_final:.4}"
    );
    Ok(Tsne {
        embedding: y,
        kl_start,
        kl_initial,
        kl_final,
    })
}

/// Symmetrized affinities `(P_{j|i} + P_{i|j}) / 2n` with per-point
/// Gaussian bandwidths matched to `perplexity`.
fn joint_probabilities<T: Scalar>(x: ArrayView2<T>, perplexity: f64) -> Array2<T> {
    let n = x.nrows();
    let mut d = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let s = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    let target = T::of(perplexity.ln());
    let tol = T::of(ENTROPY_TOL);
    let mut cond = Array2::<T>::zeros((n, n));
    let mut row = vec![T::zero(); n];
    for i in 0..n {
        // shifting by the nearest distance leaves the distribution unchanged
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| d[[i, j]])
            .fold(T::infinity(), T::min);
        let (mut beta, mut lo, mut hi) = (T::one(), T::neg_infinity(), T::infinity());
        for _ in 0..BANDWIDTH_STEPS {
            let mut sum = T::zero();
            let mut dsum = T::zero();
            for j in 0..n {
                row[j] = if j == i {
                    T::zero()
                } else {
                    (-(d[[i, j]] - dmin) * beta).exp()
                };
                sum += row[j];
                dsum += (d[[i, j]] - dmin) * row[j];
            }
            let sum = sum.max(T::min_positive_value());
            let entropy = sum.ln() + beta * dsum / sum;
            for v in row.iter_mut() {
                *v /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < tol {
                break;
            }
            if diff > T::zero() {
                lo = beta;
                beta = if hi.is_infinite() {
                    beta * T::of(2.0)
                } else {
                    (beta + hi) / T::of(2.0)
                };
            } else {
                hi = beta;
                beta = if lo.is_infinite() {
                    beta / T::of(2.0)
                } else {
                    (beta + lo) / T::of(2.0)
                };
            }
        }
        cond.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    let floor = T::of(1e-12);
    let scale = T::of(2.0 * n as f64);
    let mut p = &cond + &cond.t();
    p.mapv_inplace(|v| (v / scale).max(floor));
    for i in 0..n {
        p[[i, i]] = T::zero();
    }
    p
}

/// Fills `num` with `1 / (1 + |y_i - y_j|²)` (zero diagonal) and returns
/// its sum.
fn student_kernel<T: Scalar>(y: &Array2<T>, num: &mut Array2<T>) -> T {
    let n = y.nrows();
    let mut z = T::zero();
    for i in 0..n {
        num[[i, i]] = T::zero();
        for j in i + 1..n {
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            let v = T::one() / (T::one() + dx * dx + dy * dy);
            num[[i, j]] = v;
            num[[j, i]] = v;
            z += v + v;
        }
    }
    z
}

fn kl_divergence<T: Scalar>(p: &Array2<T>, y: &Array2<T>) -> f64 {
    let n = y.nrows();
    let mut num = Array2::<T>::zeros((n, n));
    let z = student_kernel(y, &mut num).as_f64();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[[i, j]].as_f64();
                let qij = (num[[i, j]].as_f64() / z).max(1e-12);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, d: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = rng::stream(seed, 77);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = Array2::zeros((2 * n_per, d));
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let c = i % 2;
            labels.push(c);
            for k in 0..d {
                x[[i, k]] = normal.sample(&mut r) + if k == 0 && c == 1 { sep } else { 0.0 };
            }
        }
        (x, labels)
    }

    #[test]
    fn perplexity_matches_target() {
        let (x, _) = blobs(30, 4, 3.0, 1);
        let p = joint_probabilities(x.view(), 10.0);
        assert!((p.sum() - 1.0).abs() < 1e-6);
        assert!((&p - &p.t()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn too_few_points() {
        let x = Array2::<f64>::zeros((20, 3));
        assert!(matches!(
            tsne_exact(x.view(), &TsneConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn separates_blobs_and_descends() {
        let (x, labels) = blobs(40, 10, 10.0, 5);
        let cfg = TsneConfig {
            perplexity: 15.0,
            iterations: 500,
            seed: 3,
            ..Default::default()
        };
        let t = tsne_exact(x.view(), &cfg).unwrap();
        assert!(t.kl_final < t.kl_initial);
        // centroid rule
        let c: Vec<[f64; 2]> = (0..2)
            .map(|k| {
                let idx: Vec<usize> = (0..80).filter(|&i| labels[i] == k).collect();
                let m = t
                    .embedding
                    .select(Axis(0), &idx)
                    .mean_axis(Axis(0))
                    .unwrap();
                [m[0], m[1]]
            })
            .collect();
        let correct = (0..80)
            .filter(|&i| {
                let e = t.embedding.row(i);
                let d = |k: usize| (e[0] - c[k][0]).powi(2) + (e[1] - c[k][1]).powi(2);
                usize::from(d(1) < d(0)) == labels[i]
            })
            .count();
        assert_eq!(correct, 80);
        let again = tsne_exact(x.view(), &cfg).unwrap();
        assert_eq!(again.embedding, t.embedding);
    }
}
