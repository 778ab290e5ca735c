//! Per-learner private data: containers, standardization, splitting,
//! CSV ingestion and the synthetic experiment designs.

mod csv_io;
mod synth;

pub use csv_io::{
    parse_features, parse_learners, read_features_csv, read_learners_csv, write_learners,
    write_learners_csv, FeatureTable,
};
pub(crate) use synth::benchmark_sample;
pub use synth::{
    draw_betas, gen_adversarial, gen_benchmark_pair, gen_fairness, gen_two_cluster_linear, generate,
    benchmark_f1, benchmark_f2, AdversarialData, FairnessData, Scenario, SyntheticConfig,
    SyntheticData,
};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Columns whose standard deviation is below this fraction of their mean
/// magnitude are treated as constant.
const ZERO_VARIANCE_RTOL: f64 = 1e-12;

/// Per-column location/scale recorded by [`standardize`].
///
/// Maps raw values to the standardized scale the learner trained on. Columns
/// flagged as zero-variance map to 0 regardless of input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    pub x_zero_variance: Vec<bool>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub y_zero_variance: bool,
}

impl StandardizationParams {
    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn transform_x(&self, x: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter((0..x.len()).map(|j| {
            if self.x_zero_variance[j] {
                0.0
            } else {
                (x[j] - self.x_mean[j]) / self.x_sd[j]
            }
        }))
    }

    pub fn transform_y(&self, y: f64) -> f64 {
        if self.y_zero_variance {
            0.0
        } else {
            (y - self.y_mean) / self.y_sd
        }
    }

    /// Standardized response back to the raw scale.
    pub fn inverse_y(&self, z: f64) -> f64 {
        if self.y_zero_variance {
            self.y_mean
        } else {
            z * self.y_sd + self.y_mean
        }
    }

    /// The single map equivalent to applying `self` and then `inner`.
    fn then(&self, inner: &StandardizationParams) -> StandardizationParams {
        let compose = |m1: f64, s1: f64, z1: bool, m2: f64, s2: f64, z2: bool| {
            if z1 {
                (m1, s1, true)
            } else if z2 {
                (m1 + s1 * m2, 0.0, true)
            } else {
                (m1 + s1 * m2, s1 * s2, false)
            }
        };
        let mut x_mean = Vec::with_capacity(self.dim());
        let mut x_sd = Vec::with_capacity(self.dim());
        let mut x_zero = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let (m, s, z) = compose(
                self.x_mean[j],
                self.x_sd[j],
                self.x_zero_variance[j],
                inner.x_mean[j],
                inner.x_sd[j],
                inner.x_zero_variance[j],
            );
            x_mean.push(m);
            x_sd.push(s);
            x_zero.push(z);
        }
        let (y_mean, y_sd, y_zero_variance) = compose(
            self.y_mean,
            self.y_sd,
            self.y_zero_variance,
            inner.y_mean,
            inner.y_sd,
            inner.y_zero_variance,
        );
        StandardizationParams {
            x_mean,
            x_sd,
            x_zero_variance: x_zero,
            y_mean,
            y_sd,
            y_zero_variance,
        }
    }
}

/// One learner's private sample.
///
/// Rows never leave the learner: other learners only ever see scalar losses
/// computed here (see [`crate::exchange::EvaluationHost`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SubDataset {
    learner_id: usize,
    features: Array2<f64>,
    responses: Array1<f64>,
    scaler: Option<StandardizationParams>,
}

impl SubDataset {
    pub fn new(learner_id: usize, features: Array2<f64>, responses: Array1<f64>) -> Result<Self> {
        if features.nrows() != responses.len() {
            return Err(Error::InvalidData {
                learner: learner_id,
                reason: format!(
                    "{} feature rows but {} responses",
                    features.nrows(),
                    responses.len()
                ),
            });
        }
        if responses.len() < 2 {
            return Err(Error::InvalidData {
                learner: learner_id,
                reason: format!("needs at least 2 rows, has {}", responses.len()),
            });
        }
        if features.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData {
                learner: learner_id,
                reason: "non-finite value".into(),
            });
        }
        Ok(SubDataset {
            learner_id,
            features,
            responses,
            scaler: None,
        })
    }

    pub fn learner_id(&self) -> usize {
        self.learner_id
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn responses(&self) -> ArrayView1<'_, f64> {
        self.responses.view()
    }

    pub fn scaler(&self) -> Option<&StandardizationParams> {
        self.scaler.as_ref()
    }

    pub fn with_learner_id(mut self, learner_id: usize) -> Self {
        self.learner_id = learner_id;
        self
    }

    /// Rows at `idx`, in that order. Keeps the learner id and scaler.
    pub fn select_rows(&self, idx: &[usize]) -> Result<SubDataset> {
        let mut out = SubDataset::new(
            self.learner_id,
            self.features.select(Axis(0), idx),
            self.responses.select(Axis(0), idx),
        )?;
        out.scaler = self.scaler.clone();
        Ok(out)
    }

    /// Stack several learners' rows into one sample (used only where the
    /// experiment design explicitly pools raw data).
    pub fn pool(learner_id: usize, parts: &[&SubDataset]) -> Result<SubDataset> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidData {
                learner: learner_id,
                reason: "nothing to pool".into(),
            });
        };
        let p = first.dim();
        let n: usize = parts.iter().map(|d| d.len()).sum();
        let mut x = Array2::zeros((n, p));
        let mut y = Array1::zeros(n);
        let mut row = 0;
        for part in parts {
            if part.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: part.dim(),
                });
            }
            for i in 0..part.len() {
                x.row_mut(row).assign(&part.features.row(i));
                y[row] = part.responses[i];
                row += 1;
            }
        }
        SubDataset::new(learner_id, x, y)
    }

    /// Same rows with one extra feature column set to `value` everywhere.
    pub fn with_constant_column(&self, value: f64) -> Result<SubDataset> {
        let n = self.len();
        let p = self.dim();
        let mut x = Array2::zeros((n, p + 1));
        x.slice_mut(ndarray::s![.., ..p]).assign(&self.features);
        x.column_mut(p).fill(value);
        SubDataset::new(self.learner_id, x, self.responses.clone())
    }
}

fn mean_sd(values: ArrayView1<f64>) -> (f64, f64, bool) {
    let n = values.len() as f64;
    let mean = values.sum() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    let zero = sd == 0.0 || sd <= ZERO_VARIANCE_RTOL * mean.abs();
    (mean, sd, zero)
}

/// Z-score every feature column and the response using only this learner's
/// rows (sample standard deviation, `n - 1` denominator).
///
/// Zero-variance columns are centered and left at 0. If `sub` was already
/// standardized, the recorded scaler is the composition so it still maps raw
/// inputs to the new scale.
pub fn standardize(sub: &SubDataset) -> Result<SubDataset> {
    let p = sub.dim();
    let mut x = sub.features.clone();
    let mut x_mean = Vec::with_capacity(p);
    let mut x_sd = Vec::with_capacity(p);
    let mut x_zero = Vec::with_capacity(p);
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s, z) = mean_sd(sub.features.column(j));
        if z {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - m) / s);
        }
        x_mean.push(m);
        x_sd.push(s);
        x_zero.push(z);
    }
    let (y_mean, y_sd, y_zero) = mean_sd(sub.responses.view());
    let y = if y_zero {
        Array1::zeros(sub.len())
    } else {
        sub.responses.mapv(|v| (v - y_mean) / y_sd)
    };
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData {
            learner: sub.learner_id,
            reason: "standardization produced non-finite values".into(),
        });
    }
    let params = StandardizationParams {
        x_mean,
        x_sd,
        x_zero_variance: x_zero,
        y_mean,
        y_sd,
        y_zero_variance: y_zero,
    };
    let scaler = match &sub.scaler {
        Some(prev) => prev.then(&params),
        None => params,
    };
    Ok(SubDataset {
        learner_id: sub.learner_id,
        features: x,
        responses: y,
        scaler: Some(scaler),
    })
}

/// Uniformly random partition into parts of sizes `ceil(n/2)` and `floor(n/2)`.
pub fn split_half(sub: &SubDataset, seed: u64) -> Result<(SubDataset, SubDataset)> {
    let n = sub.len();
    if n < 4 {
        return Err(Error::TooFewRows {
            learner: sub.learner_id,
            required: 4,
            actual: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let cut = n.div_ceil(2);
    Ok((sub.select_rows(&idx[..cut])?, sub.select_rows(&idx[cut..])?))
}

/// Sign-flip attack: responses negated, features untouched.
pub fn attack_flip(sub: &SubDataset) -> SubDataset {
    let mut out = sub.clone();
    out.responses.mapv_inplace(|v| -v);
    if let Some(s) = out.scaler.as_mut() {
        s.y_mean = -s.y_mean;
    }
    out
}
