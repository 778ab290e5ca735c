use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::eigen::EigenDecomposition;
use super::{cluster_embedding, embed_from_eig};
use crate::error::{Error, Result};
use crate::seed;

/// Laplacian eigenvalues at or below this count as null directions and
/// bound the largest K considered.
pub const NULL_EIGENVALUE: f64 = 1e-8;
const DISPERSION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    Gap,
    Penalty,
}

fn default_references() -> usize {
    20
}
fn default_restarts() -> usize {
    super::kmeans::DEFAULT_RESTARTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    /// Candidate K values; defaults to `1..=min(10, L)`.
    pub k_grid: Option<Vec<usize>>,
    /// Penalty weight; defaults to `ln(L) / L`.
    pub lambda_n: Option<f64>,
    /// Reference draws for the gap statistic.
    #[serde(default = "default_references")]
    pub references: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            method: SelectionMethod::Gap,
            k_grid: None,
            lambda_n: None,
            references: default_references(),
            restarts: default_restarts(),
        }
    }
}

impl SelectionConfig {
    pub fn penalty(lambda_n: Option<f64>) -> Self {
        SelectionConfig {
            method: SelectionMethod::Penalty,
            lambda_n,
            ..Default::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(grid) = &self.k_grid {
            if grid.is_empty() {
                return Err(Error::Config("k_grid is empty".into()));
            }
            if let Some(&k) = grid.iter().find(|&&k| k == 0 || k > n) {
                return Err(Error::InvalidK { k, n });
            }
        }
        if let Some(l) = self.lambda_n {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::Config(format!("lambda_n must be non-negative, got {l}")));
            }
        }
        if self.references == 0 || self.restarts == 0 {
            return Err(Error::Config("references and restarts must be positive".into()));
        }
        Ok(())
    }
}

/// One point of the K-selection curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPoint {
    pub k: usize,
    /// Within-cluster sum of squares of the embedded rows.
    pub dispersion: f64,
    /// Gap(K), or the penalized objective.
    pub value: f64,
    /// Gap standard error `sd * sqrt(1 + 1/B)`; absent for the penalty method.
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCurve {
    pub method: SelectionMethod,
    pub points: Vec<SelectionPoint>,
    pub chosen: usize,
    pub lambda_n: Option<f64>,
}

/// Within-cluster sum of squared distances to cluster means.
pub fn within_dispersion(rows: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if labels.len() != rows.nrows() {
        return Err(Error::LengthMismatch(labels.len(), rows.nrows()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = Array2::<f64>::zeros((k, rows.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let mut s = sums.row_mut(l);
        s += &rows.row(i);
        counts[l] += 1;
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let m = counts[l] as f64;
        total += rows
            .row(i)
            .iter()
            .zip(sums.row(l))
            .map(|(x, s)| (x - s / m).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

/// `sum_t sum_{i,j in P_t} ||u_i - u_j||^2 / (2 |P_t|) + K lambda_n`,
/// with clusters given by `labels` in `0..k`.
pub fn penalized_objective(
    rows: ArrayView2<f64>,
    labels: &[usize],
    k: usize,
    lambda_n: f64,
) -> Result<f64> {
    if labels.len() != rows.nrows() {
        return Err(Error::LengthMismatch(labels.len(), rows.nrows()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidK { k: l + 1, n: k });
        }
        members[l].push(i);
    }
    let mut total = 0.0;
    for (t, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::EmptyCluster(t));
        }
        let mut pair = 0.0;
        for &i in m {
            for &j in m {
                pair += rows
                    .row(i)
                    .iter()
                    .zip(rows.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
        total += pair / (2.0 * m.len() as f64);
    }
    Ok(total + k as f64 * lambda_n)
}

/// Largest K the grid may reach: the number of Laplacian eigenvalues above
/// [`NULL_EIGENVALUE`] (at least one).
pub fn k_cap(eig: &EigenDecomposition) -> usize {
    eig.values.iter().filter(|v| **v > NULL_EIGENVALUE).count().max(1)
}

fn effective_grid(cfg: &SelectionConfig, eig: &EigenDecomposition) -> Vec<usize> {
    let n = eig.values.len();
    let cap = k_cap(eig);
    let mut grid = cfg
        .k_grid
        .clone()
        .unwrap_or_else(|| (1..=n.min(10)).collect());
    grid.sort_unstable();
    grid.dedup();
    let kept: Vec<usize> = grid.iter().copied().filter(|&k| k <= cap).collect();
    if kept.is_empty() {
        vec![grid[0].min(cap)]
    } else {
        kept
    }
}

/// Dimension of the embedding used to score K. A one-column row-normalized
/// embedding is constant, so K = 1 is scored in two dimensions.
pub fn scoring_dim(k: usize, n: usize) -> usize {
    k.max(2).min(n)
}

fn dispersion_at(
    eig: &EigenDecomposition,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<(f64, Array2<f64>)> {
    let emb = embed_from_eig(eig, scoring_dim(k, eig.values.len()))?;
    let fit = cluster_embedding(&emb, k, restarts, seed)?;
    Ok((fit.objective, emb.rows))
}

/// Gap statistic of a fixed set of rows at K: returns `(gap, se)`.
pub fn gap_statistic(
    rows: ArrayView2<f64>,
    dispersion: f64,
    k: usize,
    references: usize,
    restarts: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (n, d) = rows.dim();
    let lo: Vec<f64> = (0..d)
        .map(|c| rows.column(c).iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|c| rows.column(c).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut logs = Vec::with_capacity(references);
    for b in 0..references {
        let mut rng = seed::rng(seed::derive(seed, b as u64));
        let reference = Array2::from_shape_fn((n, d), |(_, c)| {
            lo[c] + (hi[c] - lo[c]) * rng.random::<f64>()
        });
        let fit = super::kmeans::kmeans_restarts(
            reference.view(),
            k,
            restarts,
            seed::derive(seed, (references + b) as u64),
        )?;
        logs.push(fit.objective.max(DISPERSION_FLOOR).ln());
    }
    let bf = references as f64;
    let mean = logs.iter().sum::<f64>() / bf;
    let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / bf).sqrt();
    let gap = mean - dispersion.max(DISPERSION_FLOOR).ln();
    Ok((gap, sd * (1.0 + 1.0 / bf).sqrt()))
}

/// Choose K from the Laplacian eigendecomposition of a similarity matrix.
pub fn select_k_from_eig(
    eig: &EigenDecomposition,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<SelectionCurve> {
    let n = eig.values.len();
    cfg.validate(n)?;
    let grid = effective_grid(cfg, eig);
    let score_seed = seed::derive_named(seed, "select-kmeans");
    let ref_seed = seed::derive_named(seed, "gap-reference");
    match cfg.method {
        SelectionMethod::Penalty => {
            let lambda = cfg
                .lambda_n
                .unwrap_or_else(|| (n as f64).ln() / n as f64);
            let mut points = Vec::with_capacity(grid.len());
            for &k in &grid {
                let (w, _) = dispersion_at(eig, k, cfg.restarts, seed::derive(score_seed, k as u64))?;
                points.push(SelectionPoint {
                    k,
                    dispersion: w,
                    value: w + k as f64 * lambda,
                    se: None,
                });
            }
            let mut chosen = 0;
            for (i, p) in points.iter().enumerate() {
                if p.value < points[chosen].value {
                    chosen = i;
                }
            }
            Ok(SelectionCurve {
                method: SelectionMethod::Penalty,
                chosen: points[chosen].k,
                points,
                lambda_n: Some(lambda),
            })
        }
        SelectionMethod::Gap => {
            let mut points = Vec::with_capacity(grid.len());
            for &k in &grid {
                let (w, rows) = dispersion_at(eig, k, cfg.restarts, seed::derive(score_seed, k as u64))?;
                let (gap, se) = gap_statistic(
                    rows.view(),
                    w,
                    k,
                    cfg.references,
                    cfg.restarts,
                    seed::derive(ref_seed, k as u64),
                )?;
                points.push(SelectionPoint {
                    k,
                    dispersion: w,
                    value: gap,
                    se: Some(se),
                });
            }
            let chosen = points
                .windows(2)
                .find(|w| w[0].value >= w[1].value - w[1].se.unwrap_or(0.0))
                .map_or(points[points.len() - 1].k, |w| w[0].k);
            Ok(SelectionCurve {
                method: SelectionMethod::Gap,
                chosen,
                points,
                lambda_n: None,
            })
        }
    }
}
