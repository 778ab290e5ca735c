//! Synthetic learner federations for the four experimental designs.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{attack_flip, SubDataset};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Two linear regression functions, half the learners each.
    TwoClusterLinear,
    /// Friedman-style benchmark pair with irrelevant Gaussian predictors.
    BenchmarkPair,
    /// Linear model with a per-learner sensitive intercept shift.
    Fairness,
    /// One linear model; some learners have sign-flipped responses.
    Adversarial,
}

/// Generator settings. Field defaults depend on the scenario, see
/// [`SyntheticConfig::for_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub scenario: Scenario,
    /// Number of learners `L`.
    pub learners: usize,
    /// Rows per learner.
    pub samples_per_learner: usize,
    /// Number of predictors `p`.
    pub dim: usize,
    /// Signal-to-noise ratio for the two-cluster design; `sigma^2 = p^2 / snr`.
    pub snr: f64,
    /// Noise variance for the other designs (overrides `snr` when set for
    /// the two-cluster design).
    pub noise_variance: Option<f64>,
    /// Coefficients of the first / second cluster. Drawn from a standard
    /// Gaussian when absent.
    pub beta1: Option<Vec<f64>>,
    pub beta2: Option<Vec<f64>>,
    /// Redraw random coefficients until `||beta1 - beta2|| >= min_separation`.
    pub min_separation: f64,
    /// Coefficient `c` of the sensitive variable.
    pub fairness_coef: f64,
    /// Learners used for training in the fairness design; the rest are test learners.
    pub train_learners: usize,
    /// 1-based ids of attacked learners (adversarial design).
    pub attacked: Vec<usize>,
    /// Size of the held-out clean test sample (adversarial design).
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::for_scenario(Scenario::TwoClusterLinear)
    }
}

impl SyntheticConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        let base = SyntheticConfig {
            scenario,
            learners: 20,
            samples_per_learner: 50,
            dim: 5,
            snr: 16.0,
            noise_variance: None,
            beta1: None,
            beta2: None,
            min_separation: 1.0,
            fairness_coef: 2.0,
            train_learners: 30,
            attacked: Vec::new(),
            test_size: 2000,
            seed: 0,
        };
        match scenario {
            Scenario::TwoClusterLinear => base,
            Scenario::BenchmarkPair => SyntheticConfig {
                samples_per_learner: 100,
                dim: 500,
                noise_variance: Some(0.01),
                ..base
            },
            Scenario::Fairness => SyntheticConfig {
                learners: 50,
                dim: 4,
                noise_variance: Some(1.0),
                ..base
            },
            Scenario::Adversarial => SyntheticConfig {
                learners: 50,
                samples_per_learner: 160,
                dim: 12,
                noise_variance: Some(0.25),
                ..base
            },
        }
    }

    /// Parse a TOML document. Missing keys take the defaults of the
    /// document's `scenario` (two-cluster-linear when absent).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let scenario = match table.get("scenario") {
            Some(v) => Scenario::deserialize(v.clone())
                .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
            None => Scenario::TwoClusterLinear,
        };
        let defaults = toml::Table::try_from(Self::for_scenario(scenario))
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = defaults;
        for (k, v) in table {
            merged.insert(k, v);
        }
        let cfg: SyntheticConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.learners < 2 {
            return bad(format!("learners must be >= 2, got {}", self.learners));
        }
        if self.samples_per_learner < 4 {
            return bad(format!(
                "samples_per_learner must be >= 4, got {}",
                self.samples_per_learner
            ));
        }
        if self.dim < 1 {
            return bad("dim must be >= 1".into());
        }
        if !(self.snr > 0.0) {
            return bad(format!("snr must be > 0, got {}", self.snr));
        }
        if let Some(v) = self.noise_variance {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("noise_variance must be finite and >= 0, got {v}"));
            }
        }
        for (name, beta) in [("beta1", &self.beta1), ("beta2", &self.beta2)] {
            if let Some(b) = beta {
                if b.len() != self.dim {
                    return bad(format!("{name} has {} entries, dim is {}", b.len(), self.dim));
                }
            }
        }
        match self.scenario {
            Scenario::BenchmarkPair if self.dim < 4 => {
                return bad("benchmark-pair needs dim >= 4".into());
            }
            Scenario::Fairness
                if self.train_learners == 0 || self.train_learners >= self.learners =>
            {
                return bad(format!(
                    "train_learners must be in 1..{}, got {}",
                    self.learners, self.train_learners
                ));
            }
            Scenario::Adversarial => {
                if let Some(&id) = self.attacked.iter().find(|&&id| id == 0 || id > self.learners) {
                    return bad(format!("attacked learner id {id} out of range"));
                }
                if self.test_size < 1 {
                    return bad("test_size must be >= 1".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn noise_sd(&self) -> f64 {
        match self.noise_variance {
            Some(v) => v.sqrt(),
            None => {
                let p = self.dim as f64;
                (p * p / self.snr).sqrt()
            }
        }
    }
}

/// Learners plus the ground truth needed to score a clustering.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub learners: Vec<SubDataset>,
    /// True cluster index per learner (0-based).
    pub labels: Vec<usize>,
    /// Sensitive value per learner (fairness design only).
    pub sensitive: Option<Vec<f64>>,
    /// Attacked flag per learner (adversarial design only; all false otherwise).
    pub attacked: Vec<bool>,
}

fn check_scenario(cfg: &SyntheticConfig, want: Scenario) -> Result<()> {
    cfg.validate()?;
    if cfg.scenario != want {
        return Err(Error::Config(format!(
            "expected scenario {want:?}, got {:?}",
            cfg.scenario
        )));
    }
    Ok(())
}

fn gaussian_matrix<R: Rng>(rng: &mut R, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(rng))
}

fn linear_learner(
    id: usize,
    beta: &[f64],
    intercept: f64,
    noise_sd: f64,
    n: usize,
    stream: u64,
) -> Result<SubDataset> {
    let mut rng = seed::rng(stream);
    let x = gaussian_matrix(&mut rng, n, beta.len());
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let y = Array1::from_iter((0..n).map(|i| {
        let signal: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        signal + intercept + noise.sample(&mut rng)
    }));
    SubDataset::new(id, x, y)
}

/// Coefficients of the two-cluster design: `beta1`/`beta2` when given, otherwise
/// standard Gaussian draws separated by at least `min_separation`.
pub fn draw_betas(cfg: &SyntheticConfig) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seed::rng(seed::derive_named(cfg.seed, "beta"));
    let mut draw = || -> Vec<f64> { (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let b1 = cfg.beta1.clone().unwrap_or_else(&mut draw);
    let mut b2 = cfg.beta2.clone().unwrap_or_else(&mut draw);
    if cfg.beta2.is_none() {
        let dist = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        let mut tries = 0;
        while dist(&b1, &b2) < cfg.min_separation && tries < 10_000 {
            b2 = draw();
            tries += 1;
        }
    }
    (b1, b2)
}

/// First `L/2` learners follow `y = beta1'x + e`, the rest `y = beta2'x + e`,
/// with `x ~ N(0, I_p)` and `e ~ N(0, p^2 / snr)`.
pub fn gen_two_cluster_linear(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    check_scenario(cfg, Scenario::TwoClusterLinear)?;
    let (b1, b2) = draw_betas(cfg);
    let sd = cfg.noise_sd();
    let half = cfg.learners / 2;
    let mut learners = Vec::with_capacity(cfg.learners);
    let mut labels = Vec::with_capacity(cfg.learners);
    for i in 0..cfg.learners {
        let (beta, label) = if i < half { (&b1, 0) } else { (&b2, 1) };
        let stream = seed::derive(seed::derive_named(cfg.seed, "learner"), i as u64);
        learners.push(linear_learner(i + 1, beta, 0.0, sd, cfg.samples_per_learner, stream)?);
        labels.push(label);
    }
    Ok(SyntheticData {
        attacked: vec![false; learners.len()],
        learners,
        labels,
        sensitive: None,
    })
}

/// `sqrt(x1^2 + (x2 x3 - 1/(x2 x4))^2)`
pub fn benchmark_f1(x: &[f64]) -> f64 {
    let inner = x[1] * x[2] - 1.0 / (x[1] * x[3]);
    (x[0] * x[0] + inner * inner).sqrt()
}

/// `atan(x2 x3 - 1/(x2 x4)) / x1`
pub fn benchmark_f2(x: &[f64]) -> f64 {
    (x[1] * x[2] - 1.0 / (x[1] * x[3])).atan() / x[0]
}

fn benchmark_rows<R: Rng>(rng: &mut R, n: usize, p: usize) -> Array2<f64> {
    let u1 = Uniform::new(0.0, 100.0).unwrap();
    let u2 = Uniform::new(40.0 * PI, 560.0 * PI).unwrap();
    let u3 = Uniform::new(0.0, 1.0).unwrap();
    let u4 = Uniform::new(1.0, 11.0).unwrap();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        x[[i, 0]] = u1.sample(rng);
        x[[i, 1]] = u2.sample(rng);
        x[[i, 2]] = u3.sample(rng);
        x[[i, 3]] = u4.sample(rng);
        for j in 4..p {
            x[[i, j]] = StandardNormal.sample(rng);
        }
    }
    x
}

/// Draw `n` rows of the benchmark design with responses from `f` (no learner
/// structure); used for fresh test samples.
pub(crate) fn benchmark_sample(
    n: usize,
    p: usize,
    noise_variance: f64,
    first_function: bool,
    stream: u64,
) -> Result<SubDataset> {
    let mut rng = seed::rng(stream);
    let x = benchmark_rows(&mut rng, n, p);
    let noise = Normal::new(0.0, noise_variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let y = Array1::from_iter((0..n).map(|i| {
        let row = x.row(i);
        let s = row.as_slice().unwrap();
        let f = if first_function { benchmark_f1(s) } else { benchmark_f2(s) };
        f + noise.sample(&mut rng)
    }));
    SubDataset::new(0, x, y)
}

/// First half of the learners from `f1`, second half from `f2`; columns
/// beyond the fourth are irrelevant standard Gaussians.
pub fn gen_benchmark_pair(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    check_scenario(cfg, Scenario::BenchmarkPair)?;
    let var = cfg.noise_variance.unwrap_or(0.01);
    let half = cfg.learners / 2;
    let mut learners = Vec::with_capacity(cfg.learners);
    let mut labels = Vec::with_capacity(cfg.learners);
    for i in 0..cfg.learners {
        let stream = seed::derive(seed::derive_named(cfg.seed, "learner"), i as u64);
        let d = benchmark_sample(cfg.samples_per_learner, cfg.dim, var, i < half, stream)?;
        learners.push(d.with_learner_id(i + 1));
        labels.push(usize::from(i >= half));
    }
    Ok(SyntheticData {
        attacked: vec![false; learners.len()],
        learners,
        labels,
        sensitive: None,
    })
}

fn fairness_beta(dim: usize) -> Vec<f64> {
    let base = [1.0, 2.0, -2.0, 2.0];
    (0..dim).map(|j| base.get(j).copied().unwrap_or(0.0)).collect()
}

fn fairness_learners(cfg: &SyntheticConfig) -> Result<(Vec<SubDataset>, Vec<f64>)> {
    let mut srng = seed::rng(seed::derive_named(cfg.seed, "sensitive"));
    let sensitive: Vec<f64> = (0..cfg.learners).map(|_| StandardNormal.sample(&mut srng)).collect();
    let beta = fairness_beta(cfg.dim);
    let sd = cfg.noise_variance.unwrap_or(1.0).sqrt();
    let learners = (0..cfg.learners)
        .map(|i| {
            let stream = seed::derive(seed::derive_named(cfg.seed, "learner"), i as u64);
            linear_learner(
                i + 1,
                &beta,
                cfg.fairness_coef * sensitive[i],
                sd,
                cfg.samples_per_learner,
                stream,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((learners, sensitive))
}

/// Fairness design split for evaluation.
#[derive(Debug, Clone)]
pub struct FairnessData {
    /// The first `train_learners` learners.
    pub train: Vec<SubDataset>,
    /// Remaining learners, each split into (first half, second half): the
    /// first half is used to place the learner, the second to validate.
    pub test: Vec<(SubDataset, SubDataset)>,
    /// Sensitive value of every learner (train first, then test). Never part
    /// of any feature matrix.
    pub sensitive: Vec<f64>,
}

/// `y = x1 + 2 x2 - 2 x3 + 2 x4 + c S_i + e`, `S_i ~ N(0,1)` fixed per learner.
pub fn gen_fairness(cfg: &SyntheticConfig) -> Result<FairnessData> {
    check_scenario(cfg, Scenario::Fairness)?;
    let (learners, sensitive) = fairness_learners(cfg)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in learners {
        if d.learner_id() <= cfg.train_learners {
            train.push(d);
        } else {
            let n = d.len();
            let cut = n.div_ceil(2);
            let first: Vec<usize> = (0..cut).collect();
            let second: Vec<usize> = (cut..n).collect();
            test.push((d.select_rows(&first)?, d.select_rows(&second)?));
        }
    }
    Ok(FairnessData {
        train,
        test,
        sensitive,
    })
}

/// Adversarial design: one linear model shared by every learner, the listed
/// learners sign-flipped, plus a clean test sample.
#[derive(Debug, Clone)]
pub struct AdversarialData {
    pub learners: Vec<SubDataset>,
    pub attacked: Vec<bool>,
    pub test: SubDataset,
    pub beta: Vec<f64>,
}

pub fn gen_adversarial(cfg: &SyntheticConfig) -> Result<AdversarialData> {
    check_scenario(cfg, Scenario::Adversarial)?;
    let beta = cfg.beta1.clone().unwrap_or_else(|| {
        let mut rng = seed::rng(seed::derive_named(cfg.seed, "beta"));
        (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    });
    let sd = cfg.noise_variance.unwrap_or(0.25).sqrt();
    let mut attacked = vec![false; cfg.learners];
    for &id in &cfg.attacked {
        attacked[id - 1] = true;
    }
    let learners = (0..cfg.learners)
        .map(|i| {
            let stream = seed::derive(seed::derive_named(cfg.seed, "learner"), i as u64);
            let d = linear_learner(i + 1, &beta, 0.0, sd, cfg.samples_per_learner, stream)?;
            Ok(if attacked[i] { attack_flip(&d) } else { d })
        })
        .collect::<Result<Vec<_>>>()?;
    let test = linear_learner(
        0,
        &beta,
        0.0,
        sd,
        cfg.test_size.max(2),
        seed::derive_named(cfg.seed, "test"),
    )?;
    Ok(AdversarialData {
        learners,
        attacked,
        test,
        beta,
    })
}

/// Dispatch on `cfg.scenario`.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    match cfg.scenario {
        Scenario::TwoClusterLinear => gen_two_cluster_linear(cfg),
        Scenario::BenchmarkPair => gen_benchmark_pair(cfg),
        Scenario::Fairness => {
            cfg.validate()?;
            let (learners, sensitive) = fairness_learners(cfg)?;
            Ok(SyntheticData {
                labels: vec![0; learners.len()],
                attacked: vec![false; learners.len()],
                learners,
                sensitive: Some(sensitive),
            })
        }
        Scenario::Adversarial => {
            let d = gen_adversarial(cfg)?;
            Ok(SyntheticData {
                labels: d.attacked.iter().map(|&a| usize::from(a)).collect(),
                learners: d.learners,
                sensitive: None,
                attacked: d.attacked,
            })
        }
    }
}
