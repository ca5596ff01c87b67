use std::collections::VecDeque;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cluster label of points that belong to no cluster.
pub const NOISE: i64 = -1;

/// Density-based clustering of the rows of `points`.
///
/// A point is a core point when at least `min_pts` points (itself included)
/// lie within distance `eps`. Clusters are the connected regions of core
/// points plus the border points they reach, numbered from 0 in order of
/// discovery; everything else is [`NOISE`].
pub fn dbscan<T: Scalar>(points: ArrayView2<T>, eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::Config(format!(
            "DBSCAN needs eps > 0 and min_pts >= 1 (got {eps}, {min_pts})"
        )));
    }
    let n = points.nrows();
    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    let d2: f64 = points
                        .row(i)
                        .iter()
                        .zip(points.row(j))
                        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                        .sum();
                    d2 <= eps2
                })
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start] != NOISE || !core[start] {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if labels[q] == NOISE {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;

    #[test]
    fn two_blobs_and_an_outlier() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let d = i as f64 * 0.1;
            pts.push([d, 0.0]);
            pts.push([20.0 + d, 0.0]);
        }
        pts.push([10.0, 10.0]);
        let a = Array2::from_shape_vec((21, 2), pts.concat()).unwrap();
        let labels = dbscan(a.view(), 0.5, 3).unwrap();
        assert_eq!(labels[20], NOISE);
        assert!((0..10).all(|i| labels[2 * i] == labels[0] && labels[2 * i + 1] == labels[1]));
        assert_ne!(labels[0], labels[1]);
        assert!(labels[..20].iter().all(|&l| l >= 0));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let a = Array2::<f64>::from_elem((6, 2), 1.5);
        assert_eq!(dbscan(a.view(), 1e-9, 6).unwrap(), vec![0; 6]);
    }

    #[test]
    fn tiny_eps_is_all_noise() {
        let a = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert_eq!(dbscan(a.view(), 1e-12, 2).unwrap(), vec![NOISE; 4]);
        assert!(dbscan(a.view(), 0.0, 2).is_err());
    }
}
