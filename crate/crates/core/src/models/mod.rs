//! Candidate regression methods and the per-learner *Select* step.
//!
//! Each learner half-splits its data, scores every method in its menu on the
//! held-out half, refits the winner on all rows and publishes a
//! [`SharedInfo`]: the fitted predictor plus its in-sample MSE.

pub mod knn;
pub mod linear;
pub mod tree;

use std::fmt;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::{split_half, StandardizationParams, SubDataset};
use crate::error::{Error, Result};
use crate::seed;

use knn::KnnModel;
use linear::LinearModel;
use tree::{BoostedStumps, Forest, RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodClass {
    Parametric,
    Nonparametric,
}

fn default_lambdas() -> Vec<f64> {
    linear::log_grid(1e-4, 10.0, 10)
}
fn default_k() -> usize {
    5
}
fn default_tree_depth() -> usize {
    6
}
fn default_tree_leaf() -> usize {
    5
}
fn default_trees() -> usize {
    50
}
fn default_forest_depth() -> usize {
    3
}
fn default_forest_leaf() -> usize {
    1
}
fn default_rounds() -> usize {
    100
}
fn default_shrinkage() -> f64 {
    0.1
}

/// A candidate method with its hyperparameters.
///
/// In config files each entry is a table keyed by `method`, e.g.
/// `{ method = "forest", trees = 100 }`; omitted hyperparameters take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    Ols,
    /// Penalty chosen from `lambdas` by an inner half-half split.
    Ridge {
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
    },
    /// Penalty chosen from `lambdas` by an inner half-half split.
    Lasso {
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    Tree {
        #[serde(default = "default_tree_depth")]
        max_depth: usize,
        #[serde(default = "default_tree_leaf")]
        min_leaf: usize,
    },
    Forest {
        #[serde(default = "default_trees")]
        trees: usize,
        #[serde(default = "default_forest_depth")]
        max_depth: usize,
        #[serde(default = "default_forest_leaf")]
        min_leaf: usize,
        #[serde(default)]
        max_features: Option<usize>,
    },
    BoostedStumps {
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_shrinkage")]
        shrinkage: f64,
    },
}

impl MethodSpec {
    pub fn ols() -> Self {
        MethodSpec::Ols
    }
    pub fn ridge() -> Self {
        MethodSpec::Ridge {
            lambdas: default_lambdas(),
        }
    }
    pub fn lasso() -> Self {
        MethodSpec::Lasso {
            lambdas: default_lambdas(),
        }
    }
    pub fn knn(k: usize) -> Self {
        MethodSpec::Knn { k }
    }
    pub fn tree() -> Self {
        MethodSpec::Tree {
            max_depth: default_tree_depth(),
            min_leaf: default_tree_leaf(),
        }
    }
    /// 50 trees of depth 3.
    pub fn forest() -> Self {
        MethodSpec::Forest {
            trees: default_trees(),
            max_depth: default_forest_depth(),
            min_leaf: default_forest_leaf(),
            max_features: None,
        }
    }
    pub fn boosted_stumps() -> Self {
        MethodSpec::BoostedStumps {
            rounds: default_rounds(),
            shrinkage: default_shrinkage(),
        }
    }

    /// Method with default hyperparameters from its id
    /// (`ols`, `ridge`, `lasso`, `knn`, `tree`, `forest`, `boosted-stumps`).
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id.trim().to_ascii_lowercase().as_str() {
            "ols" | "lr" | "linear" => Self::ols(),
            "ridge" => Self::ridge(),
            "lasso" => Self::lasso(),
            "knn" => Self::knn(default_k()),
            "tree" => Self::tree(),
            "forest" | "rf" => Self::forest(),
            "boosted-stumps" | "gb" | "boosting" => Self::boosted_stumps(),
            other => return Err(Error::Config(format!("unknown method id {other:?}"))),
        })
    }

    /// Parse a comma-separated list of method ids.
    pub fn parse_menu(ids: &str) -> Result<Vec<Self>> {
        ids.split(',').filter(|s| !s.trim().is_empty()).map(Self::from_id).collect()
    }

    pub fn id(&self) -> &'static str {
        match self {
            MethodSpec::Ols => "ols",
            MethodSpec::Ridge { .. } => "ridge",
            MethodSpec::Lasso { .. } => "lasso",
            MethodSpec::Knn { .. } => "knn",
            MethodSpec::Tree { .. } => "tree",
            MethodSpec::Forest { .. } => "forest",
            MethodSpec::BoostedStumps { .. } => "boosted-stumps",
        }
    }

    pub fn class(&self) -> MethodClass {
        match self {
            MethodSpec::Ols | MethodSpec::Ridge { .. } | MethodSpec::Lasso { .. } => {
                MethodClass::Parametric
            }
            _ => MethodClass::Nonparametric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| {
            Err(Error::Config(format!("{}: {r}", self.id())))
        };
        match self {
            MethodSpec::Ols => Ok(()),
            MethodSpec::Ridge { lambdas } | MethodSpec::Lasso { lambdas } => {
                if lambdas.is_empty() {
                    bad("lambda grid is empty")
                } else if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                    bad("lambdas must be positive and finite")
                } else {
                    Ok(())
                }
            }
            MethodSpec::Knn { k } if *k == 0 => bad("k must be >= 1"),
            MethodSpec::Tree { min_leaf, .. } if *min_leaf == 0 => bad("min_leaf must be >= 1"),
            MethodSpec::Forest {
                trees,
                min_leaf,
                max_features,
                ..
            } => {
                if *trees == 0 {
                    bad("trees must be >= 1")
                } else if *min_leaf == 0 {
                    bad("min_leaf must be >= 1")
                } else if *max_features == Some(0) {
                    bad("max_features must be >= 1")
                } else {
                    Ok(())
                }
            }
            MethodSpec::BoostedStumps { rounds, shrinkage } => {
                if *rounds == 0 {
                    bad("rounds must be >= 1")
                } else if !(*shrinkage > 0.0) {
                    bad("shrinkage must be positive")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Model {
    Linear(LinearModel),
    Knn(KnnModel),
    Tree(RegressionTree),
    Forest(Forest),
    Boosted(BoostedStumps),
}

/// A fitted regression function. Opaque apart from `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    method: String,
    training_size: usize,
    dim: usize,
    model: Model,
}

impl Predictor {
    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn training_size(&self) -> usize {
        self.training_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: ArrayView1<f64>) -> f64 {
        match &self.model {
            Model::Linear(m) => m.predict(x),
            Model::Knn(m) => m.predict(x),
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Boosted(m) => m.predict(x),
        }
    }

    /// Coefficients when the fitted model is linear.
    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.model {
            Model::Linear(m) => Some(m),
            _ => None,
        }
    }

    #[cfg(test)]
    pub(crate) fn forest(&self) -> Option<&Forest> {
        match &self.model {
            Model::Forest(m) => Some(m),
            _ => None,
        }
    }
}

/// Pick the penalty from `lambdas` by fitting on one half of `data` and
/// scoring on the other. Ties keep the earlier grid entry.
fn inner_cv_lambda(
    data: &SubDataset,
    lambdas: &[f64],
    seed: u64,
    fit_path: impl Fn(&SubDataset, &[f64]) -> Vec<LinearModel>,
) -> f64 {
    if lambdas.len() == 1 || data.len() < 4 {
        return lambdas[0];
    }
    let (train, test) = split_half(data, seed).expect("n >= 4 checked");
    let fits = fit_path(&train, lambdas);
    let mut best = (f64::INFINITY, lambdas[0]);
    for (lam, m) in lambdas.iter().zip(&fits) {
        let err = (0..test.len())
            .map(|i| {
                let r = test.responses()[i] - m.predict(test.features().row(i));
                r * r
            })
            .sum::<f64>()
            / test.len() as f64;
        if err < best.0 {
            best = (err, *lam);
        }
    }
    best.1
}

/// Fit `method` on `data`. Hyperparameter search (the lasso/ridge penalty)
/// uses only `data`, through an inner half-half split seeded from `seed`.
pub fn fit(method: &MethodSpec, data: &SubDataset, seed: u64) -> Result<Predictor> {
    method.validate()?;
    let x = data.features();
    let y = data.responses();
    let inner_seed = seed::derive_named(seed, "inner-cv");
    let model = match method {
        MethodSpec::Ols => Model::Linear(linear::fit_ols(x, y)),
        MethodSpec::Ridge { lambdas } => {
            let lam = inner_cv_lambda(data, lambdas, inner_seed, |d, grid| {
                grid.iter()
                    .map(|&l| linear::fit_ridge(d.features(), d.responses(), l))
                    .collect()
            });
            Model::Linear(linear::fit_ridge(x, y, lam))
        }
        MethodSpec::Lasso { lambdas } => {
            let lam = inner_cv_lambda(data, lambdas, inner_seed, |d, grid| {
                linear::lasso_path(d.features(), d.responses(), grid)
            });
            Model::Linear(linear::fit_lasso(x, y, lam))
        }
        MethodSpec::Knn { k } => Model::Knn(KnnModel::fit(x, y, *k)),
        MethodSpec::Tree {
            max_depth,
            min_leaf,
        } => {
            let rows: Vec<usize> = (0..data.len()).collect();
            let params = TreeParams {
                max_depth: *max_depth,
                min_leaf: *min_leaf,
                max_features: None,
            };
            Model::Tree(RegressionTree::fit(x, y, &rows, params, &mut seed::rng(seed)))
        }
        MethodSpec::Forest {
            trees,
            max_depth,
            min_leaf,
            max_features,
        } => {
            let params = TreeParams {
                max_depth: *max_depth,
                min_leaf: *min_leaf,
                max_features: *max_features,
            };
            Model::Forest(Forest::fit(x, y, *trees, params, seed))
        }
        MethodSpec::BoostedStumps { rounds, shrinkage } => {
            Model::Boosted(BoostedStumps::fit(x, y, *rounds, *shrinkage))
        }
    };
    Ok(Predictor {
        method: method.id().to_string(),
        training_size: data.len(),
        dim: data.dim(),
        model,
    })
}

/// Mean squared residual of `pred` over every row of `data`.
pub fn mse(pred: &Predictor, data: &SubDataset) -> Result<f64> {
    if pred.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: pred.dim(),
            actual: data.dim(),
        });
    }
    let x = data.features();
    let y = data.responses();
    let mut acc = 0.0;
    for i in 0..data.len() {
        let r = y[i] - pred.predict_unchecked(x.row(i));
        acc += r * r;
    }
    Ok(acc / data.len() as f64)
}

/// What a learner publishes after the Select step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedInfo {
    pub learner_id: usize,
    /// The selected method.
    pub method: MethodSpec,
    /// The selected method refit on all of the learner's rows.
    pub predictor: Predictor,
    /// In-sample MSE of `predictor` on the learner's rows.
    pub fitted_mse: f64,
    pub sample_size: usize,
    /// Maps raw inputs onto the scale `predictor` was trained on.
    pub scaler: Option<StandardizationParams>,
    /// Held-out MSE of every menu entry (`None` when the fit failed).
    pub cv_scores: Vec<(String, Option<f64>)>,
}

impl SharedInfo {
    /// Prediction for a raw-scale feature vector, returned on the raw
    /// response scale.
    pub fn predict_raw(&self, x: ArrayView1<f64>) -> Result<f64> {
        match &self.scaler {
            None => self.predictor.predict(x),
            Some(s) => {
                if x.len() != s.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: s.dim(),
                        actual: x.len(),
                    });
                }
                let z: Array1<f64> = s.transform_x(x);
                Ok(s.inverse_y(self.predictor.predict(z.view())?))
            }
        }
    }
}

fn ties_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Half-half cross-validated method selection followed by a full refit.
///
/// Ties in held-out MSE prefer parametric methods, then the earlier menu
/// entry. A method that fails to fit is skipped with a warning.
pub fn select_method(menu: &[MethodSpec], data: &SubDataset, seed: u64) -> Result<SharedInfo> {
    if menu.is_empty() {
        return Err(Error::Config("method menu is empty".into()));
    }
    let (train, test) = split_half(data, seed::derive_named(seed, "outer-split"))?;
    let fit_seed = seed::derive_named(seed, "cv-fit");
    let mut scores = Vec::with_capacity(menu.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, method) in menu.iter().enumerate() {
        let score = fit(method, &train, seed::derive(fit_seed, idx as u64))
            .and_then(|p| mse(&p, &test))
            .and_then(|s| {
                if s.is_finite() {
                    Ok(s)
                } else {
                    Err(Error::Fit {
                        method: method.id().into(),
                        reason: "non-finite held-out loss".into(),
                    })
                }
            });
        match score {
            Ok(s) => {
                scores.push((method.id().to_string(), Some(s)));
                let better = match best {
                    None => true,
                    Some((b, bs)) => {
                        if ties_close(s, bs) {
                            method.class() == MethodClass::Parametric
                                && menu[b].class() == MethodClass::Nonparametric
                        } else {
                            s < bs
                        }
                    }
                };
                if better {
                    best = Some((idx, s));
                }
            }
            Err(e) => {
                log::warn!("learner {}: skipping {}: {e}", data.learner_id(), method.id());
                scores.push((method.id().to_string(), None));
            }
        }
    }
    let (chosen, _) = best.ok_or(Error::NoViableMethod {
        learner: data.learner_id(),
    })?;
    let method = menu[chosen].clone();
    let predictor = fit(&method, data, seed::derive(seed::derive_named(seed, "refit"), chosen as u64))?;
    let fitted_mse = mse(&predictor, data)?;
    Ok(SharedInfo {
        learner_id: data.learner_id(),
        method,
        predictor,
        fitted_mse,
        sample_size: data.len(),
        scaler: data.scaler().cloned(),
        cv_scores: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::standardize;
    use ndarray::{array, Array2};
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn all_methods() -> Vec<MethodSpec> {
        vec![
            MethodSpec::ols(),
            MethodSpec::ridge(),
            MethodSpec::lasso(),
            MethodSpec::knn(5),
            MethodSpec::tree(),
            MethodSpec::forest(),
            MethodSpec::boosted_stumps(),
        ]
    }

    fn linear_data(n: usize, noise: f64, s: u64) -> SubDataset {
        let mut rng = seed::rng(s);
        let x = Array2::from_shape_simple_fn((n, 3), || StandardNormal.sample(&mut rng));
        let e = Normal::new(0.0, noise).unwrap();
        let y = Array1::from_shape_fn(n, |i| 1.5 * x[[i, 0]] - x[[i, 2]] + e.sample(&mut rng));
        SubDataset::new(1, x, y).unwrap()
    }

    #[test]
    fn constant_response_everywhere() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| (i as f64) * (j as f64 + 1.0));
        let d = SubDataset::new(1, x, Array1::from_elem(12, 4.0)).unwrap();
        for m in all_methods() {
            let p = fit(&m, &d, 1).unwrap();
            for q in [array![0.0, 0.0], array![100.0, -3.0]] {
                assert!((p.predict(q.view()).unwrap() - 4.0).abs() < 1e-9, "{m}");
            }
        }
    }

    #[test]
    fn predict_checks_dimension() {
        let p = fit(&MethodSpec::ols(), &linear_data(20, 0.1, 1), 0).unwrap();
        let err = p.predict(array![1.0].view()).unwrap_err();
        assert!(err.to_string().contains('3') && err.to_string().contains('1'));
    }

    #[test]
    fn mse_hand_values() {
        let d = SubDataset::new(1, array![[0.0], [1.0]], array![1.0, -1.0]).unwrap();
        // fit a constant-zero model: ridge with huge penalty on mean-zero y
        let p = fit(&MethodSpec::Ridge { lambdas: vec![1e15] }, &d, 0).unwrap();
        assert!((mse(&p, &d).unwrap() - 1.0).abs() < 1e-12);
        let exact = SubDataset::new(1, array![[0.0], [1.0], [2.0]], array![1.0, 3.0, 5.0]).unwrap();
        let p = fit(&MethodSpec::ols(), &exact, 0).unwrap();
        assert!(mse(&p, &exact).unwrap() < 1e-20);
    }

    #[test]
    fn mse_matches_independent_sum() {
        let d = linear_data(37, 1.0, 3);
        let p = fit(&MethodSpec::forest(), &d, 8).unwrap();
        let mut terms: Vec<f64> = (0..d.len())
            .map(|i| (d.responses()[i] - p.predict(d.features().row(i)).unwrap()).powi(2))
            .collect();
        terms.reverse();
        let reversed = terms.iter().sum::<f64>() / 37.0;
        assert!((mse(&p, &d).unwrap() - reversed).abs() < 1e-12);
    }

    #[test]
    fn forest_prediction_is_tree_mean() {
        let d = linear_data(40, 0.5, 4);
        let p = fit(&MethodSpec::forest(), &d, 2).unwrap();
        let f = p.forest().unwrap();
        assert_eq!(f.trees().len(), 50);
        let q = array![0.3, -1.0, 2.0];
        let manual = f.trees().iter().map(|t| t.predict(q.view())).sum::<f64>() / 50.0;
        assert!((p.predict(q.view()).unwrap() - manual).abs() < 1e-12);
    }

    #[test]
    fn fits_are_deterministic() {
        let d = linear_data(30, 1.0, 5);
        for m in all_methods() {
            assert_eq!(fit(&m, &d, 77).unwrap(), fit(&m, &d, 77).unwrap());
        }
    }

    #[test]
    fn singleton_menu() {
        let d = linear_data(30, 1.0, 6);
        let info = select_method(&[MethodSpec::knn(3)], &d, 1).unwrap();
        assert_eq!(info.method.id(), "knn");
        assert_eq!(info.fitted_mse, mse(&info.predictor, &d).unwrap());
        assert_eq!(info.sample_size, 30);
    }

    #[test]
    fn ties_prefer_parametric() {
        // constant response: every method scores exactly 0
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i + j) as f64);
        let d = SubDataset::new(2, x, Array1::from_elem(20, 1.0)).unwrap();
        let info = select_method(&[MethodSpec::knn(5), MethodSpec::tree(), MethodSpec::ols()], &d, 3)
            .unwrap();
        assert_eq!(info.method.id(), "ols");
    }

    #[test]
    fn ols_beats_knn_on_linear_data() {
        let menu = [MethodSpec::ols(), MethodSpec::knn(5)];
        let wins = (0..50)
            .filter(|&r| {
                let d = linear_data(200, 0.1, 100 + r);
                select_method(&menu, &d, r).unwrap().method.id() == "ols"
            })
            .count();
        assert!(wins >= 45, "{wins}");
    }

    #[test]
    fn bad_menus() {
        let d = linear_data(20, 1.0, 7);
        assert!(select_method(&[], &d, 0).is_err());
        let err = select_method(&[MethodSpec::Knn { k: 0 }], &d, 0).unwrap_err();
        assert!(matches!(err, Error::NoViableMethod { learner: 1 }));
        assert!(MethodSpec::from_id("svr").is_err());
        assert_eq!(MethodSpec::parse_menu("lasso, rf").unwrap(), vec![MethodSpec::lasso(), MethodSpec::forest()]);
    }

    #[test]
    fn menu_from_toml() {
        #[derive(Deserialize)]
        struct M {
            menu: Vec<MethodSpec>,
        }
        let m: M = toml::from_str(
            "menu = [{ method = \"lasso\" }, { method = \"forest\", trees = 10 }]",
        )
        .unwrap();
        assert_eq!(m.menu[0], MethodSpec::lasso());
        assert!(matches!(m.menu[1], MethodSpec::Forest { trees: 10, max_depth: 3, .. }));
    }

    #[test]
    fn raw_prediction_round_trips_scaler() {
        let raw = linear_data(40, 0.01, 9);
        let z = standardize(&raw).unwrap();
        let info = select_method(&[MethodSpec::ols()], &z, 0).unwrap();
        let feats = raw.features();
        let row = feats.row(5);
        let pred = info.predict_raw(row).unwrap();
        let direct = fit(&MethodSpec::ols(), &raw, 0).unwrap().predict(row).unwrap();
        assert!((pred - direct).abs() < 1e-9);
    }
}
