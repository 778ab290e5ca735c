use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accuracy::clustering_accuracy;
use super::report::{ExperimentReport, Record};
use crate::collaborate::{aggregate_predict, ClusterEnsemble};
use crate::dataset::{
    benchmark_sample, draw_betas, gen_benchmark_pair, gen_two_cluster_linear, Scenario,
    SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::models::{MethodSpec, SharedInfo};
use crate::pipeline::{run_sec, SecConfig, SecOutput};
use crate::seed;
use crate::spectral::SelectionConfig;

fn to_string<F>(f: F) -> Result<String>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
}

fn replication_seed(master: u64, r: usize) -> u64 {
    seed::derive(seed::derive_named(master, "replication"), r as u64)
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn check_menu(menu: &[MethodSpec]) -> Result<()> {
    if menu.is_empty() {
        return Err(Error::Config("method menu is empty".into()));
    }
    menu.iter().try_for_each(MethodSpec::validate)
}

/// Accuracy sweep over SNR, dimension and per-learner sample size on the
/// two-cluster linear design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sim1Config {
    pub snrs: Vec<f64>,
    pub dims: Vec<usize>,
    pub samples: Vec<usize>,
    pub learners: usize,
    pub replications: usize,
    pub menu: Vec<MethodSpec>,
    pub selection: SelectionConfig,
    pub min_separation: f64,
    /// Replication of the first cell whose eigenvalues and embedding are dumped.
    pub dump_replication: Option<usize>,
    pub seed: u64,
}

impl Default for Sim1Config {
    fn default() -> Self {
        Sim1Config {
            snrs: (0..8).map(|e| 2f64.powi(e)).collect(),
            dims: vec![5, 10, 20],
            samples: vec![50],
            learners: 20,
            replications: 50,
            menu: vec![MethodSpec::lasso(), MethodSpec::forest()],
            selection: SelectionConfig::default(),
            min_separation: 1.0,
            dump_replication: Some(0),
            seed: 2024,
        }
    }
}

impl Sim1Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snrs.is_empty() || self.dims.is_empty() || self.samples.is_empty() {
            return Err(Error::Config("snrs, dims and samples must be non-empty".into()));
        }
        if self.snrs.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("snrs must be positive".into()));
        }
        if self.dims.contains(&0) || self.samples.iter().any(|&n| n < 4) {
            return Err(Error::Config("dims must be >= 1 and samples >= 4".into()));
        }
        if self.learners < 2 || self.replications == 0 {
            return Err(Error::Config("need >= 2 learners and >= 1 replication".into()));
        }
        self.selection.validate(self.learners)?;
        check_menu(&self.menu)
    }
}

pub fn sim1_cell(snr: f64, p: usize, n: usize) -> String {
    format!("snr={snr} p={p} n={n}")
}

pub fn run_sim1(cfg: &Sim1Config) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    for &snr in &cfg.snrs {
        for &p in &cfg.dims {
            for &n in &cfg.samples {
                cells.push((snr, p, n));
            }
        }
    }
    // (dim, (beta1, beta2)), shared by every replication
    type Betas = (usize, (Vec<f64>, Vec<f64>));
    let betas: Vec<Betas> = cfg
        .dims
        .iter()
        .map(|&p| {
            let mut b = SyntheticConfig::for_scenario(Scenario::TwoClusterLinear);
            b.dim = p;
            b.min_separation = cfg.min_separation;
            b.seed = seed::derive(seed::derive_named(cfg.seed, "beta"), p as u64);
            (p, draw_betas(&b))
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let results: Vec<(Record, Option<SecOutput>)> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (snr, p, n) = cells[c];
            let rep_seed = replication_seed(cfg.seed, r);
            let (b1, b2) = &betas.iter().find(|(d, _)| *d == p).expect("beta per dim").1;
            let data_cfg = SyntheticConfig {
                learners: cfg.learners,
                samples_per_learner: n,
                dim: p,
                snr,
                beta1: Some(b1.clone()),
                beta2: Some(b2.clone()),
                seed: rep_seed,
                ..SyntheticConfig::for_scenario(Scenario::TwoClusterLinear)
            };
            let synth = gen_two_cluster_linear(&data_cfg)?;
            let sec = SecConfig {
                selection: cfg.selection.clone(),
                seed: rep_seed,
                ..SecConfig::new(cfg.menu.clone())
            };
            let out = run_sec(&synth.learners, &sec)?;
            let acc = clustering_accuracy(&out.clusters.labels, &synth.labels)?;
            let mut rec = Record::new(sim1_cell(snr, p, n), r, rep_seed);
            rec.k_hat = Some(out.clusters.k);
            rec.accuracy = Some(acc.fraction);
            rec.exact = Some(acc.exact);
            let keep = c == 0 && cfg.dump_replication == Some(r);
            Ok((rec, keep.then_some(out)))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(results.len());
    let mut flagged = None;
    for (rec, out) in results {
        if out.is_some() {
            flagged = out;
        }
        records.push(rec);
    }
    let mut report = ExperimentReport::new("sim1", cfg.replications, records, start.elapsed().as_secs_f64());
    let mut curve = String::from("snr,p,n,exact_mean,exact_se,accuracy_mean,k_hat_mean\n");
    for &(snr, p, n) in &cells {
        let cell = sim1_cell(snr, p, n);
        let ex = report.find(&cell, "exact").expect("exact recorded");
        let _ = writeln!(
            curve,
            "{snr},{p},{n},{},{},{},{}",
            ex.mean,
            ex.se,
            report.mean(&cell, "accuracy").unwrap_or(f64::NAN),
            report.mean(&cell, "k_hat").unwrap_or(f64::NAN)
        );
    }
    report.files.push(("accuracy_curve.csv".into(), curve));
    if let Some(out) = flagged {
        report.files.extend(dump_files(&out)?);
    }
    Ok(report)
}

/// CSV dumps of one SEC run: similarity, dissimilarity, eigenvalues,
/// embedding and the K-selection curve.
pub fn dump_files(out: &SecOutput) -> Result<Vec<(String, String)>> {
    Ok(vec![
        ("similarity.csv".into(), to_string(|b| out.exchange.similarity.write_csv(b))?),
        ("dissimilarity.csv".into(), to_string(|b| out.exchange.dissimilarity.write_csv(b))?),
        ("eigenvalues.csv".into(), to_string(|b| out.clusters.write_eigenvalues_csv(b))?),
        ("embedding.csv".into(), to_string(|b| out.clusters.write_embedding_csv(b))?),
        ("selection.csv".into(), to_string(|b| out.clusters.write_selection_csv(b))?),
        ("labels.csv".into(), to_string(|b| out.clusters.write_labels_csv(b))?),
    ])
}

/// Robustness to the candidate menu on the two-function benchmark design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sim2Config {
    pub learners: usize,
    pub samples: usize,
    pub dim: usize,
    pub noise_variance: f64,
    /// Menus to compare, typically nested.
    pub menus: Vec<Vec<MethodSpec>>,
    pub replications: usize,
    /// Fresh `f1` rows used to score learner 1.
    pub test_size: usize,
    pub selection: SelectionConfig,
    pub seed: u64,
}

/// The native zoo in the nesting order used for the menu sweep.
pub fn nested_menus() -> Vec<Vec<MethodSpec>> {
    let zoo = [
        MethodSpec::boosted_stumps(),
        MethodSpec::forest(),
        MethodSpec::lasso(),
        MethodSpec::knn(5),
        MethodSpec::ridge(),
        MethodSpec::tree(),
        MethodSpec::ols(),
    ];
    [1usize, 3, 5, 7].iter().map(|&m| zoo[..m].to_vec()).collect()
}

impl Default for Sim2Config {
    fn default() -> Self {
        Sim2Config {
            learners: 20,
            samples: 100,
            dim: 24,
            noise_variance: 0.01,
            menus: nested_menus(),
            replications: 50,
            test_size: 100,
            selection: SelectionConfig::default(),
            seed: 2024,
        }
    }
}

impl Sim2Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.learners < 2 || self.samples < 4 || self.dim < 4 || self.replications == 0 {
            return Err(Error::Config(
                "need >= 2 learners, >= 4 samples, dim >= 4 and >= 1 replication".into(),
            ));
        }
        if !(self.noise_variance >= 0.0) || self.test_size == 0 {
            return Err(Error::Config("noise_variance >= 0 and test_size >= 1 required".into()));
        }
        if self.menus.is_empty() {
            return Err(Error::Config("no menus".into()));
        }
        self.selection.validate(self.learners)?;
        self.menus.iter().try_for_each(|m| check_menu(m))
    }
}

pub fn sim2_cell(menu_size: usize) -> String {
    format!("menu={menu_size}")
}

/// Test MSE of a raw-scale predictor on learner 1's standardized response
/// scale (raw MSE divided by learner 1's response variance).
fn scaled_mse(
    predict: impl Fn(ndarray::ArrayView1<f64>) -> Result<f64>,
    test: &crate::dataset::SubDataset,
    learner1: &SharedInfo,
) -> Result<f64> {
    let scale = learner1.scaler.as_ref().map_or(1.0, |s| s.y_sd * s.y_sd);
    let mut acc = 0.0;
    for i in 0..test.len() {
        let r = test.responses()[i] - predict(test.features().row(i))?;
        acc += r * r;
    }
    Ok(acc / test.len() as f64 / scale)
}

pub fn run_sim2(cfg: &Sim2Config) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..cfg.menus.len())
        .flat_map(|m| (0..cfg.replications).map(move |r| (m, r)))
        .collect();
    let records: Vec<Record> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let rep_seed = replication_seed(cfg.seed, r);
            let data_cfg = SyntheticConfig {
                learners: cfg.learners,
                samples_per_learner: cfg.samples,
                dim: cfg.dim,
                noise_variance: Some(cfg.noise_variance),
                seed: rep_seed,
                ..SyntheticConfig::for_scenario(Scenario::BenchmarkPair)
            };
            let synth = gen_benchmark_pair(&data_cfg)?;
            let test = benchmark_sample(
                cfg.test_size,
                cfg.dim,
                cfg.noise_variance,
                true,
                seed::derive_named(rep_seed, "test"),
            )?;
            let sec = SecConfig {
                selection: cfg.selection.clone(),
                seed: rep_seed,
                ..SecConfig::new(cfg.menus[m].clone())
            };
            let out = run_sec(&synth.learners, &sec)?;
            let acc = clustering_accuracy(&out.clusters.labels, &synth.labels)?;
            let learner1 = &out.infos[0];
            let ensembles = ClusterEnsemble::from_result(&out.clusters, &out.infos)?;
            let own = &ensembles[out.clusters.labels[0]];
            let mut rec = Record::new(sim2_cell(cfg.menus[m].len()), r, rep_seed);
            rec.k_hat = Some(out.clusters.k);
            rec.accuracy = Some(acc.fraction);
            rec.exact = Some(acc.exact);
            rec.mse.insert(
                "collaboration".into(),
                scaled_mse(|x| aggregate_predict(own, x), &test, learner1)?,
            );
            rec.mse.insert(
                "no_collaboration".into(),
                scaled_mse(|x| learner1.predict_raw(x), &test, learner1)?,
            );
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport::new("sim2", cfg.replications, records, start.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sim1_is_reproducible() {
        let cfg = Sim1Config {
            snrs: vec![64.0],
            dims: vec![5],
            samples: vec![40],
            learners: 8,
            replications: 3,
            menu: vec![MethodSpec::ols()],
            ..Default::default()
        };
        let a = run_sim1(&cfg).unwrap();
        let b = run_sim1(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 3);
        assert!(a.files.iter().any(|(n, _)| n == "eigenvalues.csv"));
        let mean = a.records.iter().map(|r| r.accuracy.unwrap()).sum::<f64>() / 3.0;
        assert!((a.mean("snr=64 p=5 n=40", "accuracy").unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn config_errors_abort_early() {
        let cfg = Sim1Config {
            snrs: vec![],
            ..Default::default()
        };
        assert!(run_sim1(&cfg).is_err());
        assert!(Sim1Config::from_toml_str("bogus = 1").is_err());
        let parsed = Sim1Config::from_toml_str("snrs = [1.0]\nmenu = [{ method = \"ols\" }]").unwrap();
        assert_eq!(parsed.dims, vec![5, 10, 20]);
        let s2 = Sim2Config {
            menus: vec![vec![]],
            ..Default::default()
        };
        assert!(run_sim2(&s2).is_err());
    }

    #[test]
    fn nested_menu_sizes() {
        let sizes: Vec<usize> = nested_menus().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 3, 5, 7]);
        let menus = nested_menus();
        for w in menus.windows(2) {
            assert_eq!(&w[1][..w[0].len()], &w[0][..]);
        }
    }
}
