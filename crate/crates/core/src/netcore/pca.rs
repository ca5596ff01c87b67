//! Principal component analysis through a one-sided Jacobi SVD of the
//! centered data.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    /// Per-feature mean removed before projection.
    pub mean: Array1<T>,
    /// `[n_features, k]`, orthonormal columns, by decreasing variance.
    pub components: Array2<T>,
    /// `[k, n_samples]` = componentsᵀ · centered data.
    pub scores: Array2<T>,
    pub explained_variance: Array1<T>,
    /// Numerical rank of the centered data.
    pub rank: usize,
    /// Fewer than the requested components were available.
    pub truncated: bool,
}

impl<T: Scalar> Pca<T> {
    /// Projects new samples (`[n_features, n]`) onto the components.
    pub fn transform(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.nrows() != self.mean.len() {
            return Err(Error::Shape(format!(
                "PCA fitted on {} features, got {}",
                self.mean.len(),
                x.nrows()
            )));
        }
        let centered = &x - &self.mean.view().insert_axis(Axis(1));
        Ok(self.components.t().dot(&centered))
    }

    /// mean + components · scores
    pub fn reconstruct(&self) -> Array2<T> {
        self.components.dot(&self.scores) + self.mean.view().insert_axis(Axis(1))
    }

    pub fn k(&self) -> usize {
        self.components.ncols()
    }
}

/// Top-`k` principal components of `data` (`[n_features, n_samples]`,
/// samples as columns). Asking for more components than the rank of the
/// centered data returns rank-many with `truncated` set.
pub fn pca<T: Scalar>(data: ArrayView2<T>, k: usize) -> Result<Pca<T>> {
    let (n_features, n_samples) = data.dim();
    if k == 0 {
        return Err(Error::Config("PCA needs k >= 1".into()));
    }
    if n_samples < 2 || n_features == 0 {
        return Err(Error::Shape(
            "PCA needs at least two samples and one feature".into(),
        ));
    }
    let mean = data.mean_axis(Axis(1)).unwrap();
    let centered = &data - &mean.view().insert_axis(Axis(1));
    let svd = thin_svd(centered.to_owned());

    let sigma_max = svd.sigma.first().copied().unwrap_or(T::zero());
    let tol = sigma_max * T::of((n_features.max(n_samples) as f64) * T::epsilon().as_f64());
    let rank = svd.sigma.iter().filter(|&&s| s > tol).count();
    let keep = k.min(rank);
    let truncated = keep < k;
    if truncated {
        log::warn!("requested {k} principal components but the data has rank {rank}");
    }
    let components = svd.u.slice(s![.., ..keep]).to_owned();
    let sigma = svd.sigma.slice(s![..keep]).to_owned();
    let scores = components.t().dot(&centered);
    let denom = T::of((n_samples - 1) as f64);
    let explained_variance = sigma.mapv(|s| s * s / denom);
    Ok(Pca {
        mean,
        components,
        scores,
        explained_variance,
        rank,
        truncated,
    })
}

pub(crate) struct Svd<T> {
    /// `[m, r]`
    pub u: Array2<T>,
    pub sigma: Array1<T>,
    /// `[n, r]`
    pub v: Array2<T>,
}

/// Thin SVD `a = u · diag(sigma) · vᵀ` with `r = min(m, n)` and singular
/// values in decreasing order.
pub(crate) fn thin_svd<T: Scalar>(a: Array2<T>) -> Svd<T> {
    if a.ncols() > a.nrows() {
        let t = thin_svd(a.t().to_owned());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let n = a.ncols();
    // rows of `w` are the columns of `a`, kept contiguous for the rotations
    let mut w = a.t().to_owned();
    let mut v = Array2::<T>::eye(n);
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (wp, wq) = (w.row(p), w.row(q));
                    (wp.dot(&wp), wq.dot(&wq), wp.dot(&wq))
                };
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<T> = w.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        sigma[j]
            .partial_cmp(&sigma[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let m = w.ncols();
    let mut u = Array2::zeros((m, n));
    let mut vs = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let sv = sigma[src];
        if sv > T::zero() {
            u.column_mut(dst).assign(&w.row(src).mapv(|x| x / sv));
        }
        // `v` holds the accumulated rotations row-wise as well
        vs.column_mut(dst).assign(&v.row(src));
    }
    sigma = order.iter().map(|&i| sigma[i]).collect();
    Svd {
        u,
        sigma: Array1::from(sigma),
        v: vs,
    }
}

fn rotate_rows<T: Scalar>(m: &mut Array2<T>, p: usize, q: usize, c: T, s: T) {
    let cols = m.ncols();
    for i in 0..cols {
        let (a, b) = (m[[p, i]], m[[q, i]]);
        m[[p, i]] = c * a - s * b;
        m[[q, i]] = s * a + c * b;
    }
}
