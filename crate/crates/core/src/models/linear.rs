//! Least squares, ridge and lasso with an unpenalized intercept.
//!
//! All three work on column-centered data. Penalties are on the `1/n`
//! scale: ridge minimizes `||y - Xb||^2 / (2n) + lambda ||b||^2 / 2`, lasso
//! minimizes `||y - Xb||^2 / (2n) + lambda ||b||_1`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Ridge penalty used when the normal equations are singular.
pub const OLS_FALLBACK_LAMBDA: f64 = 1e-8;

/// Lasso coordinate descent stops once no coefficient moves more than this.
pub const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x.iter())
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }
}

struct Centered {
    x: Array2<f64>,
    y: Array1<f64>,
    x_mean: Array1<f64>,
    y_mean: f64,
}

fn center(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Centered {
    let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean().expect("non-empty");
    Centered {
        x: &x - &x_mean,
        y: y.mapv(|v| v - y_mean),
        x_mean,
        y_mean,
    }
}

impl Centered {
    fn finish(&self, beta: Vec<f64>) -> LinearModel {
        let shift: f64 = beta.iter().zip(self.x_mean.iter()).map(|(b, m)| b * m).sum();
        LinearModel {
            intercept: self.y_mean - shift,
            coefficients: beta,
        }
    }

    fn gram(&self) -> (Array2<f64>, Array1<f64>) {
        let n = self.x.nrows() as f64;
        (self.x.t().dot(&self.x) / n, self.x.t().dot(&self.y) / n)
    }
}

/// Solve `a z = b` for symmetric positive definite `a`. Returns `None` when a
/// pivot falls below `rel_tol` times the largest diagonal entry.
fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>, rel_tol: f64) -> Option<Vec<f64>> {
    let p = a.nrows();
    let scale = a.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 && p > 0 {
        return None;
    }
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= rel_tol * scale {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        let s: f64 = (0..i).map(|k| l[[i, k]] * z[k]).sum();
        z[i] = (b[i] - s) / l[[i, i]];
    }
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| l[[k, i]] * z[k]).sum();
        z[i] = (z[i] - s) / l[[i, i]];
    }
    Some(z)
}

fn ridge_centered(c: &Centered, lambda: f64) -> Vec<f64> {
    let (mut g, b) = c.gram();
    let p = g.nrows();
    for j in 0..p {
        g[[j, j]] += lambda;
    }
    cholesky_solve(&g, &b, 0.0).unwrap_or_else(|| {
        // every column constant and lambda = 0
        vec![0.0; p]
    })
}

/// Ordinary least squares. Singular or badly conditioned designs fall back
/// to ridge with [`OLS_FALLBACK_LAMBDA`].
pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> LinearModel {
    let c = center(x, y);
    let (g, b) = c.gram();
    let beta = cholesky_solve(&g, &b, 1e-12).unwrap_or_else(|| ridge_centered(&c, OLS_FALLBACK_LAMBDA));
    c.finish(beta)
}

pub fn fit_ridge(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> LinearModel {
    let c = center(x, y);
    let beta = ridge_centered(&c, lambda);
    c.finish(beta)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Lasso objective on centered data for coefficients `beta`.
fn lasso_objective(c: &Centered, beta: &[f64], lambda: f64) -> f64 {
    let n = c.x.nrows() as f64;
    let r = &c.y - &c.x.dot(&Array1::from(beta.to_vec()));
    r.dot(&r) / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Cyclic coordinate descent from `beta`; returns the objective after
/// each sweep when `trace` is set.
fn lasso_cd(c: &Centered, lambda: f64, beta: &mut [f64], trace: bool) -> Vec<f64> {
    let n = c.x.nrows() as f64;
    let p = c.x.ncols();
    let norms: Vec<f64> = (0..p).map(|j| c.x.column(j).dot(&c.x.column(j)) / n).collect();
    let mut resid = &c.y - &c.x.dot(&Array1::from(beta.to_vec()));
    let mut objectives = Vec::new();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if norms[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = c.x.column(j);
            let rho = col.dot(&resid) / n + norms[j] * beta[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if trace {
            objectives.push(lasso_objective(c, beta, lambda));
        }
        if max_delta <= LASSO_TOL {
            break;
        }
    }
    objectives
}

pub fn fit_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> LinearModel {
    let c = center(x, y);
    let mut beta = vec![0.0; x.ncols()];
    lasso_cd(&c, lambda, &mut beta, false);
    c.finish(beta)
}

/// Lasso fit plus the objective value after every coordinate-descent sweep.
pub fn fit_lasso_traced(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: f64,
) -> (LinearModel, Vec<f64>) {
    let c = center(x, y);
    let mut beta = vec![0.0; x.ncols()];
    let trace = lasso_cd(&c, lambda, &mut beta, true);
    (c.finish(beta), trace)
}

/// Lasso fits for every penalty in `lambdas`, warm-started from the largest
/// penalty down. Output order matches the input order.
pub fn lasso_path(x: ArrayView2<f64>, y: ArrayView1<f64>, lambdas: &[f64]) -> Vec<LinearModel> {
    let c = center(x, y);
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut beta = vec![0.0; x.ncols()];
    let mut out = vec![None; lambdas.len()];
    for i in order {
        lasso_cd(&c, lambdas[i], &mut beta, false);
        out[i] = Some(c.finish(beta.clone()));
    }
    out.into_iter().map(|m| m.expect("filled")).collect()
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_design(n: usize, p: usize, s: u64) -> Array2<f64> {
        let mut rng = seed::rng(s);
        Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn ols_recovers_noiseless_slope() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64 * 0.7 - 2.0);
        let y = x.column(0).mapv(|v| 2.0 * v);
        let m = fit_ols(x.view(), y.view());
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
        assert!(m.intercept.abs() < 1e-8);
    }

    #[test]
    fn ols_residuals_orthogonal() {
        let x = random_design(60, 4, 1);
        let mut rng = seed::rng(2);
        let y = Array1::from_shape_fn(60, |i| x.row(i).sum() + rng.random::<f64>());
        let m = fit_ols(x.view(), y.view());
        let r: Array1<f64> = (0..60).map(|i| y[i] - m.predict(x.row(i))).collect();
        for j in 0..4 {
            assert!(x.column(j).dot(&r).abs() < 1e-8);
        }
        assert!(r.sum().abs() < 1e-8);
    }

    #[test]
    fn collinear_design_does_not_crash() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]];
        let y = array![1.0, 2.0, 3.0, 4.0];
        let m = fit_ols(x.view(), y.view());
        for i in 0..4 {
            assert!((m.predict(x.row(i)) - y[i]).abs() < 1e-6);
        }
        // minimum-norm direction: coefficients proportional to (1, 2)
        assert!((m.coefficients[1] - 2.0 * m.coefficients[0]).abs() < 1e-6);
    }

    #[test]
    fn ridge_limit_is_mean() {
        let x = random_design(30, 3, 3);
        let y = Array1::from_shape_fn(30, |i| 1.0 + x[[i, 0]]);
        let m = fit_ridge(x.view(), y.view(), 1e12);
        let mean = y.mean().unwrap();
        for i in 0..30 {
            assert!((m.predict(x.row(i)) - mean).abs() < 1e-9);
        }
    }

    /// Proximal gradient (ISTA), independent of the coordinate-descent path.
    fn ista(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Vec<f64> {
        let c = center(x.view(), y.view());
        let (g, b) = c.gram();
        // step 1 / L with L bounded by the trace of the Gram matrix
        let step = 1.0 / g.diag().sum();
        let mut beta = Array1::<f64>::zeros(x.ncols());
        for _ in 0..200_000 {
            let grad = g.dot(&beta) - &b;
            let next = (&beta - &(grad * step)).mapv(|v| soft_threshold(v, lambda * step));
            let d = (&next - &beta).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
            beta = next;
            if d < 1e-13 {
                break;
            }
        }
        beta.to_vec()
    }

    #[test]
    fn lasso_zeroes_irrelevant_and_matches_ista() {
        let x = random_design(80, 2, 4);
        let y = x.column(0).mapv(|v| 3.0 * v);
        let m = fit_lasso(x.view(), y.view(), 0.1);
        assert_eq!(m.coefficients[1], 0.0);
        let oracle = ista(&x, &y, 0.1);
        for (a, b) in m.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn lasso_objective_non_increasing() {
        let x = random_design(50, 6, 5);
        let mut rng = seed::rng(6);
        let y = Array1::from_shape_fn(50, |i| x[[i, 0]] - 2.0 * x[[i, 3]] + rng.random::<f64>());
        for &lam in &[1e-4, 0.01, 0.3] {
            let (_, tr) = fit_lasso_traced(x.view(), y.view(), lam);
            assert!(!tr.is_empty());
            for w in tr.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn path_matches_cold_fits() {
        let x = random_design(40, 5, 7);
        let y = Array1::from_shape_fn(40, |i| x[[i, 1]] + 0.5 * x[[i, 2]]);
        let grid = log_grid(1e-4, 10.0, 10);
        assert_eq!(grid.len(), 10);
        assert!((grid[0] - 1e-4).abs() < 1e-15 && (grid[9] - 10.0).abs() < 1e-12);
        let path = lasso_path(x.view(), y.view(), &grid);
        for (lam, m) in grid.iter().zip(&path) {
            let cold = fit_lasso(x.view(), y.view(), *lam);
            for (a, b) in m.coefficients.iter().zip(&cold.coefficients) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        assert!(path[9].coefficients.iter().all(|&b| b == 0.0));
    }
}
