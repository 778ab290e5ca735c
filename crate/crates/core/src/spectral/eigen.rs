use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ASYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues in descending order with unit eigenvectors as the matching
/// columns of `vectors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl EigenDecomposition {
    /// `U diag(values) U^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.view().insert_axis(ndarray::Axis(0));
        scaled.dot(&self.vectors.t())
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Iterates until the largest off-diagonal entry is at most `1e-12` (scaled
/// by the Frobenius norm when that exceeds one). Each eigenvector is signed
/// so that its largest-magnitude component (first one on ties) is positive.
pub fn sym_eig(m: ArrayView2<f64>) -> Result<EigenDecomposition> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::NotSquare(rows, cols));
    }
    let n = rows;
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if asym > ASYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }
    let mut a = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (m[[i, j]] + m[[j, i]]));
    let mut v = Array2::<f64>::eye(n);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = OFF_DIAGONAL_TOL * frob.max(1.0);

    let max_off = |a: &Array2<f64>| {
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max(a[[i, j]].abs());
            }
        }
        worst
    };

    let mut sweeps = 0;
    while max_off(&a) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[[p, p]] -= t * apq;
                a[[q, q]] += t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[[r, p]];
                        let arq = a[[r, q]];
                        let np = c * arp - s * arq;
                        let nq = s * arp + c * arq;
                        a[[r, p]] = np;
                        a[[p, r]] = np;
                        a[[r, q]] = nq;
                        a[[q, r]] = nq;
                    }
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = c * vrp - s * vrq;
                    v[[r, q]] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let mut lead = 0;
        for r in 1..n {
            if col[r].abs() > col[lead].abs() {
                lead = r;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        vectors.column_mut(dst).assign(&col.mapv(|x| sign * x));
    }
    Ok(EigenDecomposition { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;
    use rand::Rng;

    fn random_sym(n: usize, s: u64) -> Array2<f64> {
        let mut rng = seed::rng(s);
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                m[[i, j]] = x;
                m[[j, i]] = x;
            }
        }
        m
    }

    #[test]
    fn identity_and_diagonal() {
        let e = sym_eig(Array2::<f64>::eye(4).view()).unwrap();
        assert!(e.values.iter().all(|v| (*v - 1.0).abs() < 1e-15));
        let e = sym_eig(array![[1.0, 0.0], [0.0, 3.0]].view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![3.0, 1.0]);
        assert_eq!(e.vectors, array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let e = sym_eig(array![[2.0, 1.0], [1.0, 2.0]].view()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[[0, 0]] - h).abs() < 1e-14 && (e.vectors[[1, 0]] - h).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        for s in 0..20 {
            let m = random_sym(10, s);
            let e = sym_eig(m.view()).unwrap();
            let diff = &e.reconstruct() - &m;
            assert!(diff.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-8);
            let gram = e.vectors.t().dot(&e.vectors);
            for i in 0..10 {
                for j in 0..10 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[[i, j]] - target).abs() < 1e-8);
                }
                let u = e.vectors.column(i);
                let resid = &m.dot(&u) - &(&u * e.values[i]);
                assert!(resid.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-8);
            }
            for w in e.values.as_slice().unwrap().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn trace_is_preserved() {
        let m = random_sym(7, 99);
        let e = sym_eig(m.view()).unwrap();
        assert!((e.values.sum() - m.diag().sum()).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        let err = sym_eig(array![[1.0, 2.0], [2.1, 1.0]].view()).unwrap_err();
        match err {
            Error::Asymmetric(d) => assert!((d - 0.1).abs() < 1e-12),
            other => panic!("{other}"),
        }
        assert!(sym_eig(Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn sign_convention() {
        let e = sym_eig(random_sym(6, 5).view()).unwrap();
        for c in e.vectors.columns() {
            let lead = c.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(lead > 0.0);
        }
    }
}
