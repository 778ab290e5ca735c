use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ExperimentReport, Record};
use crate::collaborate::assign_new_learner;
use crate::dataset::{gen_fairness, Scenario, SubDataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::models::linear::{fit_ols, LinearModel};
use crate::models::{select_method, MethodSpec};
use crate::pipeline::{run_sec, SecConfig};
use crate::seed;
use crate::spectral::SelectionConfig;

/// Oracle / pooled / clustered regression on learners whose responses carry
/// an unobserved per-learner shift `c S_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessConfig {
    pub coefs: Vec<f64>,
    pub replications: usize,
    pub learners: usize,
    pub train_learners: usize,
    pub samples: usize,
    pub dim: usize,
    pub noise_variance: f64,
    pub menu: Vec<MethodSpec>,
    pub selection: SelectionConfig,
    pub seed: u64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            coefs: vec![2.0, 4.0, 6.0],
            replications: 50,
            learners: 50,
            train_learners: 30,
            samples: 50,
            dim: 4,
            noise_variance: 1.0,
            menu: vec![MethodSpec::forest(), MethodSpec::ols()],
            selection: SelectionConfig::default(),
            seed: 2024,
        }
    }
}

impl FairnessConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefs.is_empty() || self.coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("coefs must be non-empty and finite".into()));
        }
        if self.replications == 0 || self.menu.is_empty() {
            return Err(Error::Config("need >= 1 replication and a non-empty menu".into()));
        }
        if self.train_learners < 2 {
            return Err(Error::Config("need >= 2 training learners".into()));
        }
        // test learners are split in half and each half must be splittable again
        if self.samples < 8 {
            return Err(Error::Config("samples must be >= 8".into()));
        }
        self.menu.iter().try_for_each(MethodSpec::validate)?;
        self.selection.validate(self.train_learners)?;
        self.data_config(0.0, 0).validate()
    }

    fn data_config(&self, c: f64, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            learners: self.learners,
            train_learners: self.train_learners,
            samples_per_learner: self.samples,
            dim: self.dim,
            noise_variance: Some(self.noise_variance),
            fairness_coef: c,
            seed,
            ..SyntheticConfig::for_scenario(Scenario::Fairness)
        }
    }
}

pub fn fairness_cell(c: f64) -> String {
    format!("c={c}")
}

fn pooled_ols(parts: &[&SubDataset]) -> Result<LinearModel> {
    let pooled = SubDataset::pool(0, parts)?;
    Ok(fit_ols(pooled.features(), pooled.responses()))
}

fn sse(model: &LinearModel, data: &SubDataset) -> f64 {
    (0..data.len())
        .map(|i| (data.responses()[i] - model.predict(data.features().row(i))).powi(2))
        .sum()
}

pub fn run_fairness(cfg: &FairnessConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..cfg.coefs.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let records: Vec<Record> = jobs
        .par_iter()
        .map(|&(ci, r)| {
            let c = cfg.coefs[ci];
            let rep_seed = seed::derive(seed::derive_named(cfg.seed, "replication"), r as u64);
            let data = gen_fairness(&cfg.data_config(c, rep_seed))?;
            let n_train = data.train.len();
            let s_train = &data.sensitive[..n_train];
            let s_test = &data.sensitive[n_train..];

            let with_s: Vec<SubDataset> = data
                .train
                .iter()
                .zip(s_train)
                .map(|(d, s)| d.with_constant_column(*s))
                .collect::<Result<_>>()?;
            let oracle = pooled_ols(&with_s.iter().collect::<Vec<_>>())?;
            let fairness = pooled_ols(&data.train.iter().collect::<Vec<_>>())?;

            let sec = SecConfig {
                standardize: false,
                selection: cfg.selection.clone(),
                seed: rep_seed,
                ..SecConfig::new(cfg.menu.clone())
            };
            let out = run_sec(&data.train, &sec)?;
            let cluster_models: Vec<LinearModel> = out
                .clusters
                .members()
                .iter()
                .map(|m| pooled_ols(&m.iter().map(|&i| &data.train[i]).collect::<Vec<_>>()))
                .collect::<Result<_>>()?;

            let mut totals = [0.0f64; 3];
            let mut rows = 0usize;
            for ((first, second), s) in data.test.iter().zip(s_test) {
                let info = select_method(
                    &cfg.menu,
                    first,
                    seed::derive(seed::derive_named(rep_seed, "newcomer"), first.learner_id() as u64),
                )?;
                let placed = assign_new_learner(
                    &info,
                    first,
                    &out.clusters,
                    &out.infos,
                    &out.prepared,
                    out.bandwidth(),
                )?;
                totals[0] += sse(&oracle, &second.with_constant_column(*s)?);
                totals[1] += sse(&fairness, second);
                totals[2] += sse(&cluster_models[placed.cluster], second);
                rows += second.len();
            }
            let mut rec = Record::new(fairness_cell(c), r, rep_seed);
            rec.k_hat = Some(out.clusters.k);
            for (arm, t) in ["oracle", "fairness", "sec_fairness"].iter().zip(totals) {
                rec.mse.insert(arm.to_string(), t / rows as f64);
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport::new(
        "fairness",
        cfg.replications,
        records,
        start.elapsed().as_secs_f64(),
    ))
}
