//! The three steps wired together, plus a saved form of the result that
//! can serve predictions later.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collaborate::ClusterEnsemble;
use crate::dataset::{standardize, SubDataset};
use crate::error::{Error, Result};
use crate::exchange::{build_similarity, ExchangeResult};
use crate::models::{select_method, MethodSpec, SharedInfo};
use crate::seed;
use crate::spectral::{sec_cluster, ClusterResult, SelectionConfig};

fn default_standardize() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecConfig {
    pub menu: Vec<MethodSpec>,
    /// Standardize each learner's features and response before fitting.
    #[serde(default = "default_standardize")]
    pub standardize: bool,
    /// Similarity bandwidth; chosen from the data when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Number of clusters; selected when absent.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub seed: u64,
}

impl SecConfig {
    pub fn new(menu: Vec<MethodSpec>) -> Self {
        SecConfig {
            menu,
            standardize: true,
            bandwidth: None,
            k: None,
            selection: SelectionConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.menu.is_empty() {
            return Err(Error::Config("method menu is empty".into()));
        }
        for m in &self.menu {
            m.validate()?;
        }
        if let Some(a) = self.bandwidth {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Config(format!("bandwidth must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SecOutput {
    /// Each learner's data as it was used for fitting and hosting.
    pub prepared: Vec<SubDataset>,
    pub infos: Vec<SharedInfo>,
    pub exchange: ExchangeResult,
    pub clusters: ClusterResult,
}

impl SecOutput {
    pub fn bandwidth(&self) -> f64 {
        self.exchange.similarity.bandwidth().unwrap_or(1.0)
    }

    pub fn ensembles(&self) -> Result<Vec<ClusterEnsemble>> {
        ClusterEnsemble::from_result(&self.clusters, &self.infos)
    }

    pub fn to_saved(&self) -> SavedClustering {
        SavedClustering {
            clusters: self.clusters.clone(),
            infos: self.infos.clone(),
            bandwidth: self.bandwidth(),
        }
    }
}

/// Prepare a learner's data the way [`run_sec`] does.
pub fn prepare(data: &SubDataset, standardize_data: bool) -> Result<SubDataset> {
    if standardize_data {
        standardize(data)
    } else {
        Ok(data.clone())
    }
}

/// Select a method for every learner, in parallel.
pub fn select_all(
    prepared: &[SubDataset],
    menu: &[MethodSpec],
    seed: u64,
) -> Result<Vec<SharedInfo>> {
    let base = seed::derive_named(seed, "select");
    prepared
        .par_iter()
        .map(|d| select_method(menu, d, seed::derive(base, d.learner_id() as u64)))
        .collect()
}

/// Select, exchange and cluster.
pub fn run_sec(learners: &[SubDataset], cfg: &SecConfig) -> Result<SecOutput> {
    cfg.validate()?;
    let prepared: Vec<SubDataset> = learners
        .iter()
        .map(|d| prepare(d, cfg.standardize))
        .collect::<Result<_>>()?;
    let infos = select_all(&prepared, &cfg.menu, cfg.seed)?;
    let exchange = build_similarity(&infos, &prepared, cfg.bandwidth)?;
    let clusters = sec_cluster(
        &exchange.similarity,
        cfg.k,
        &cfg.selection,
        seed::derive_named(cfg.seed, "cluster"),
    )?;
    Ok(SecOutput {
        prepared,
        infos,
        exchange,
        clusters,
    })
}

/// Clustering plus the published learner information, enough to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedClustering {
    pub clusters: ClusterResult,
    pub infos: Vec<SharedInfo>,
    pub bandwidth: f64,
}

impl SavedClustering {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }

    pub fn ensembles(&self) -> Result<Vec<ClusterEnsemble>> {
        ClusterEnsemble::from_result(&self.clusters, &self.infos)
    }

    /// Cluster of a learner id, if it was part of the clustering.
    pub fn cluster_of(&self, learner_id: usize) -> Option<usize> {
        self.clusters
            .learner_ids
            .iter()
            .position(|&id| id == learner_id)
            .map(|i| self.clusters.labels[i])
    }
}
