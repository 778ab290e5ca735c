use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Largest fraction of agreeing labels over one-to-one label matchings.
    pub fraction: f64,
    /// Same number of clusters as the truth and every label matched.
    pub exact: bool,
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let out = labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(i) => i,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect();
    (out, seen.len())
}

/// Maximum-weight one-to-one matching on a rectangular table by brute force
/// over all injections of the smaller side.
fn best_matching_exhaustive(table: &[Vec<usize>]) -> usize {
    let rows = table.len();
    let cols = table.first().map_or(0, |r| r.len());
    if rows > cols {
        let t: Vec<Vec<usize>> = (0..cols).map(|c| (0..rows).map(|r| table[r][c]).collect()).collect();
        return best_matching_exhaustive(&t);
    }
    fn go(table: &[Vec<usize>], r: usize, used: &mut Vec<bool>) -> usize {
        if r == table.len() {
            return 0;
        }
        let mut best = 0;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(table[r][c] + go(table, r + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(table, 0, &mut vec![false; cols])
}

/// Hungarian algorithm (shortest augmenting path form) minimizing cost on
/// an n x n matrix. Returns the column assigned to each row.
pub(crate) fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

fn best_matching_hungarian(table: &[Vec<usize>]) -> usize {
    let rows = table.len();
    let cols = table.first().map_or(0, |r| r.len());
    let n = rows.max(cols);
    let top = table.iter().flatten().copied().max().unwrap_or(0) as f64;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    let w = if r < rows && c < cols { table[r][c] } else { 0 };
                    top - w as f64
                })
                .collect()
        })
        .collect();
    let assign = hungarian_min(&cost);
    assign
        .iter()
        .enumerate()
        .filter(|&(r, &c)| r < rows && c < cols)
        .map(|(r, &c)| table[r][c])
        .sum()
}

/// Agreement between predicted and true labels up to relabeling.
pub fn clustering_accuracy(labels: &[usize], truth: &[usize]) -> Result<Accuracy> {
    if labels.len() != truth.len() {
        return Err(Error::LengthMismatch(labels.len(), truth.len()));
    }
    if labels.is_empty() {
        return Err(Error::Config("no labels to compare".into()));
    }
    let (pred, kp) = relabel(labels);
    let (tru, kt) = relabel(truth);
    let mut table = vec![vec![0usize; kt]; kp];
    for (p, t) in pred.iter().zip(&tru) {
        table[*p][*t] += 1;
    }
    let matched = if kp.min(kt) <= 8 {
        best_matching_exhaustive(&table)
    } else {
        best_matching_hungarian(&table)
    };
    let fraction = matched as f64 / labels.len() as f64;
    Ok(Accuracy {
        fraction,
        exact: kp == kt && matched == labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn permutation_and_wrong_k() {
        let a = clustering_accuracy(&[1, 1, 2, 2], &[2, 2, 1, 1]).unwrap();
        assert_eq!(a, Accuracy { fraction: 1.0, exact: true });
        let a = clustering_accuracy(&[1, 1, 1, 1], &[1, 1, 2, 2]).unwrap();
        assert_eq!(a, Accuracy { fraction: 0.5, exact: false });
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn extra_predicted_cluster_is_not_exact() {
        let a = clustering_accuracy(&[0, 0, 1, 2], &[0, 0, 1, 1]).unwrap();
        assert_eq!(a.fraction, 0.75);
        assert!(!a.exact);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = seed::rng(11);
        for _ in 0..300 {
            let kp = rng.random_range(1..=6usize);
            let kt = rng.random_range(1..=6usize);
            let table: Vec<Vec<usize>> = (0..kp)
                .map(|_| (0..kt).map(|_| rng.random_range(0..10)).collect())
                .collect();
            assert_eq!(best_matching_hungarian(&table), best_matching_exhaustive(&table));
        }
    }

    #[test]
    fn seven_point_labelings_match_brute_force() {
        // oracle: try every map from predicted labels to true labels that is one-to-one
        fn brute(labels: &[usize], truth: &[usize]) -> usize {
            let kp = labels.iter().max().unwrap() + 1;
            let kt = truth.iter().max().unwrap() + 1;
            let mut best = 0;
            let total = (kt + 1).pow(kp as u32);
            for code in 0..total {
                let mut map = Vec::with_capacity(kp);
                let mut c = code;
                for _ in 0..kp {
                    map.push(c % (kt + 1));
                    c /= kt + 1;
                }
                let targets: Vec<usize> = map.iter().copied().filter(|&m| m < kt).collect();
                let mut dedup = targets.clone();
                dedup.sort();
                dedup.dedup();
                if dedup.len() != targets.len() {
                    continue;
                }
                let hits = labels.iter().zip(truth).filter(|(p, t)| map[**p] == **t).count();
                best = best.max(hits);
            }
            best
        }
        let mut rng = seed::rng(2);
        for _ in 0..200 {
            let labels: Vec<usize> = (0..7).map(|_| rng.random_range(0..3)).collect();
            let truth: Vec<usize> = (0..7).map(|_| rng.random_range(0..3)).collect();
            let (l, _) = relabel(&labels);
            let (t, _) = relabel(&truth);
            let got = clustering_accuracy(&labels, &truth).unwrap().fraction;
            assert!((got - brute(&l, &t) as f64 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn many_labels_use_assignment_solver() {
        let truth: Vec<usize> = (0..40).map(|i| i / 4).collect();
        let mut labels: Vec<usize> = truth.iter().map(|t| (t * 7 + 3) % 10).collect();
        labels[0] = labels[39];
        let a = clustering_accuracy(&labels, &truth).unwrap();
        assert!((a.fraction - 39.0 / 40.0).abs() < 1e-15);
        assert!(!a.exact);
    }
}
