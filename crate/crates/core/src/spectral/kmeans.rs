use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_RESTARTS: usize = 20;
pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    /// Cluster of each row, numbered by first appearance.
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances from rows to their centroids.
    pub objective: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Relabel clusters in order of first appearance and permute centroids to match.
pub fn canonicalize(labels: &[usize], centroids: &Array2<f64>) -> (Vec<usize>, Array2<f64>) {
    let k = centroids.nrows();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    for slot in map.iter_mut() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
        }
    }
    let mut out = Array2::zeros(centroids.dim());
    for (old, &new) in map.iter().enumerate() {
        out.row_mut(new).assign(&centroids.row(old));
    }
    (labels.iter().map(|&l| map[l]).collect(), out)
}

fn plus_plus_init(rows: ArrayView2<f64>, k: usize, rng: &mut seed::Rng) -> Array2<f64> {
    let n = rows.nrows();
    let mut centroids = Array2::zeros((k, rows.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&rows.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(rows.row(i), rows.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&rows.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(rows.row(i), rows.row(pick)));
        }
    }
    centroids
}

fn objective(rows: ArrayView2<f64>, labels: &[usize], centroids: &Array2<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(rows.row(i), centroids.row(l)))
        .sum()
}

fn update_centroids(rows: ArrayView2<f64>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let mut sums = Array2::zeros((k, rows.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let mut s = sums.row_mut(l);
        s += &rows.row(i);
        counts[l] += 1;
    }
    for (c, &m) in counts.iter().enumerate() {
        if m > 0 {
            sums.row_mut(c).mapv_inplace(|x| x / m as f64);
        }
    }
    (sums, counts)
}

/// Move the point farthest from its centroid (among clusters with more than
/// one member) into each empty cluster.
fn repair_empty(
    rows: ArrayView2<f64>,
    labels: &mut [usize],
    centroids: &mut Array2<f64>,
    counts: &mut [usize],
) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far = (usize::MAX, -1.0);
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] > 1 {
                let d = sq_dist(rows.row(i), centroids.row(l));
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        let (i, _) = far;
        let old = labels[i];
        labels[i] = empty;
        counts[old] -= 1;
        counts[empty] = 1;
        centroids.row_mut(empty).assign(&rows.row(i));
        let (fresh, _) = update_centroids(rows, labels, centroids.nrows());
        centroids.row_mut(old).assign(&fresh.row(old));
    }
}

fn lloyd(rows: ArrayView2<f64>, k: usize, rng: &mut seed::Rng) -> KMeansResult {
    let n = rows.nrows();
    let mut centroids = plus_plus_init(rows, k, rng);
    let mut labels: Vec<usize> = (0..n).map(|i| nearest(rows.row(i), &centroids).0).collect();
    let (c, mut counts) = update_centroids(rows, &labels, k);
    centroids = c;
    repair_empty(rows, &mut labels, &mut centroids, &mut counts);
    let mut obj = objective(rows, &labels, &centroids);
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<usize> = (0..n).map(|i| nearest(rows.row(i), &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
        let (c, mut counts) = update_centroids(rows, &labels, k);
        centroids = c;
        repair_empty(rows, &mut labels, &mut centroids, &mut counts);
        let new_obj = objective(rows, &labels, &centroids);
        assert!(
            new_obj <= obj + 1e-9 * (1.0 + obj),
            "k-means objective increased from {obj} to {new_obj}"
        );
        obj = new_obj;
    }
    let (labels, centroids) = canonicalize(&labels, &centroids);
    KMeansResult {
        objective: objective(rows, &labels, &centroids),
        labels,
        centroids,
    }
}

/// k-means++ seeded Lloyd iterations, best of `restarts` runs.
/// Ties in the objective keep the lowest restart index.
pub fn kmeans_restarts(
    rows: ArrayView2<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMeansResult> {
    let n = rows.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let runs: Vec<KMeansResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| lloyd(rows, k, &mut seed::rng(seed::derive(seed, r as u64))))
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.objective < runs[best].objective {
            best = r;
        }
    }
    Ok(runs.into_iter().nth(best).expect("at least one restart"))
}

/// [`kmeans_restarts`] with 20 restarts.
pub fn kmeans(rows: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_restarts(rows, k, DEFAULT_RESTARTS, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_pairs_on_a_line() {
        let r = kmeans(array![[0.0], [0.0], [10.0], [10.0]].view(), 2, 1).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let rows = array![[0.0, 1.0], [2.0, 2.0], [5.0, -1.0]];
        let r = kmeans(rows.view(), 3, 4).unwrap();
        assert_eq!(r.labels, vec![0, 1, 2]);
        assert!(r.objective.abs() < 1e-15);
    }

    #[test]
    fn duplicate_rows_repair_instead_of_crashing() {
        let rows = array![[1.0], [1.0], [1.0], [1.0]];
        let r = kmeans(rows.view(), 3, 0).unwrap();
        let mut seen = r.labels.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn invalid_k() {
        let rows = array![[1.0], [2.0]];
        assert!(kmeans(rows.view(), 0, 0).is_err());
        assert!(kmeans(rows.view(), 3, 0).is_err());
    }

    #[test]
    fn canonical_labels() {
        let c = array![[5.0], [1.0]];
        let (labels, cen) = canonicalize(&[1, 1, 0], &c);
        assert_eq!(labels, vec![0, 0, 1]);
        assert_eq!(cen, array![[1.0], [5.0]]);
    }

    #[test]
    fn deterministic_for_seed() {
        let rows = Array2::from_shape_fn((15, 2), |(i, j)| ((i * 13 + j * 7) % 10) as f64);
        assert_eq!(kmeans(rows.view(), 3, 9).unwrap(), kmeans(rows.view(), 3, 9).unwrap());
    }
}
