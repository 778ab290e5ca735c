use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accuracy::clustering_accuracy;
use super::report::{ExperimentReport, Record};
use crate::dataset::{gen_adversarial, Scenario, SubDataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::models::linear::{fit_ols, LinearModel};
use crate::models::MethodSpec;
use crate::pipeline::{run_sec, SecConfig};
use crate::seed;

/// Sign-flip attack sweep: how much pooling with attacked learners hurts,
/// and whether a two-way clustering isolates the intact ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialConfig {
    pub attack_counts: Vec<usize>,
    pub replications: usize,
    pub learners: usize,
    pub samples: usize,
    pub dim: usize,
    pub noise_variance: f64,
    pub test_size: usize,
    pub menu: Vec<MethodSpec>,
    pub seed: u64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            attack_counts: vec![0, 5, 10, 20, 30, 45],
            replications: 50,
            learners: 50,
            samples: 160,
            dim: 12,
            noise_variance: 0.25,
            test_size: 2000,
            menu: vec![MethodSpec::lasso(), MethodSpec::forest()],
            seed: 2024,
        }
    }
}

impl AdversarialConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attack_counts.is_empty() || self.replications == 0 || self.menu.is_empty() {
            return Err(Error::Config(
                "attack_counts, replications and menu must be non-empty".into(),
            ));
        }
        if let Some(k) = self.attack_counts.iter().find(|&&k| k >= self.learners) {
            return Err(Error::Config(format!(
                "cannot attack {k} of {} learners: the last learner stays intact",
                self.learners
            )));
        }
        self.menu.iter().try_for_each(MethodSpec::validate)?;
        SyntheticConfig {
            learners: self.learners,
            samples_per_learner: self.samples,
            dim: self.dim,
            noise_variance: Some(self.noise_variance),
            test_size: self.test_size,
            ..SyntheticConfig::for_scenario(Scenario::Adversarial)
        }
        .validate()
    }
}

pub fn adversarial_cell(k: usize) -> String {
    format!("attacked={k}")
}

fn pooled_ols(learners: &[SubDataset], members: &[usize]) -> Result<LinearModel> {
    let parts: Vec<&SubDataset> = members.iter().map(|&i| &learners[i]).collect();
    let pooled = SubDataset::pool(0, &parts)?;
    Ok(fit_ols(pooled.features(), pooled.responses()))
}

fn test_mse(model: &LinearModel, test: &SubDataset) -> f64 {
    (0..test.len())
        .map(|i| (test.responses()[i] - model.predict(test.features().row(i))).powi(2))
        .sum::<f64>()
        / test.len() as f64
}

pub fn run_adversarial(cfg: &AdversarialConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..cfg.attack_counts.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let records: Vec<Record> = jobs
        .par_iter()
        .map(|&(ci, r)| {
            let k = cfg.attack_counts[ci];
            let rep_seed = seed::derive(seed::derive_named(cfg.seed, "replication"), r as u64);
            let mut candidates: Vec<usize> = (1..cfg.learners).collect();
            candidates.shuffle(&mut seed::rng(seed::derive(
                seed::derive_named(rep_seed, "attack"),
                k as u64,
            )));
            let mut attacked: Vec<usize> = candidates[..k].to_vec();
            attacked.sort_unstable();
            let data = gen_adversarial(&SyntheticConfig {
                learners: cfg.learners,
                samples_per_learner: cfg.samples,
                dim: cfg.dim,
                noise_variance: Some(cfg.noise_variance),
                test_size: cfg.test_size,
                attacked,
                seed: rep_seed,
                ..SyntheticConfig::for_scenario(Scenario::Adversarial)
            })?;
            let last = cfg.learners - 1;
            let all: Vec<usize> = (0..cfg.learners).collect();
            let intact: Vec<usize> = all.iter().copied().filter(|&i| !data.attacked[i]).collect();

            let sec = SecConfig {
                standardize: false,
                k: Some(2),
                seed: rep_seed,
                ..SecConfig::new(cfg.menu.clone())
            };
            let out = run_sec(&data.learners, &sec)?;
            let home = out.clusters.labels[last];
            let found: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&i| out.clusters.labels[i] == home)
                .collect();
            let truth: Vec<usize> = data.attacked.iter().map(|&a| usize::from(a)).collect();
            let acc = clustering_accuracy(&out.clusters.labels, &truth)?;

            let mut rec = Record::new(adversarial_cell(k), r, rep_seed);
            rec.k_hat = Some(out.clusters.k);
            rec.accuracy = Some(acc.fraction);
            rec.exact = Some(found == intact);
            let arms = [
                ("collaboration_all", all.clone()),
                ("no_collaboration", vec![last]),
                ("sec", found),
                ("oracle", intact),
            ];
            for (arm, members) in arms {
                let model = pooled_ols(&data.learners, &members)?;
                rec.mse.insert(arm.to_string(), test_mse(&model, &data.test));
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport::new(
        "adversarial",
        cfg.replications,
        records,
        start.elapsed().as_secs_f64(),
    ))
}
