//! The *Cluster* step: normalized-Laplacian spectral clustering of the
//! similarity matrix, with the number of clusters chosen by the gap
//! statistic or a penalized k-means objective.

pub mod eigen;
pub mod kmeans;
pub mod select;

use std::io::Write;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::SimilarityMatrix;
use crate::seed;

pub use eigen::{sym_eig, EigenDecomposition};
pub use kmeans::{kmeans, kmeans_restarts, KMeansResult};
pub use select::{
    penalized_objective, select_k_from_eig, within_dispersion, SelectionConfig, SelectionCurve,
    SelectionMethod, SelectionPoint,
};

/// Rows whose norm falls below this are not rescaled.
pub const DEGENERATE_ROW_NORM: f64 = 1e-12;

/// `D^{-1/2} S D^{-1/2}` with `D` the diagonal of row sums.
pub fn normalized_laplacian(s: &SimilarityMatrix) -> Array2<f64> {
    let v = s.values();
    let inv_sqrt = v.sum_axis(Axis(1)).mapv(|d| 1.0 / d.sqrt());
    let n = v.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| v[[i, j]] * inv_sqrt[i] * inv_sqrt[j])
}

/// Top eigenvectors as rows, each scaled to unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub rows: Array2<f64>,
    /// Rows too close to zero to normalize; clustered post hoc.
    pub degenerate: Vec<bool>,
}

/// Row-normalized matrix of the leading `k` eigenvectors.
pub fn embed_from_eig(eig: &EigenDecomposition, k: usize) -> Result<Embedding> {
    let n = eig.values.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut rows = eig.vectors.slice(ndarray::s![.., ..k]).to_owned();
    let mut degenerate = vec![false; n];
    for (i, mut row) in rows.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < DEGENERATE_ROW_NORM {
            degenerate[i] = true;
        } else {
            row.mapv_inplace(|x| x / norm);
        }
    }
    Ok(Embedding { rows, degenerate })
}

pub fn laplacian_eig(s: &SimilarityMatrix) -> Result<EigenDecomposition> {
    sym_eig(normalized_laplacian(s).view())
}

/// Embed the learners of `s` in `k` dimensions.
pub fn embed(s: &SimilarityMatrix, k: usize) -> Result<Embedding> {
    embed_from_eig(&laplacian_eig(s)?, k)
}

/// k-means on the non-degenerate rows, then degenerate rows join their
/// nearest centroid.
pub fn cluster_embedding(
    emb: &Embedding,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMeansResult> {
    let good: Vec<usize> = (0..emb.rows.nrows()).filter(|&i| !emb.degenerate[i]).collect();
    if good.len() == emb.rows.nrows() || good.len() < k {
        return kmeans_restarts(emb.rows.view(), k, restarts, seed);
    }
    let sub = emb.rows.select(Axis(0), &good);
    let fit = kmeans_restarts(sub.view(), k, restarts, seed)?;
    let mut labels = vec![0; emb.rows.nrows()];
    for (pos, &i) in good.iter().enumerate() {
        labels[i] = fit.labels[pos];
    }
    let mut objective = fit.objective;
    for (i, label) in labels.iter_mut().enumerate() {
        if emb.degenerate[i] {
            let row = emb.rows.row(i);
            let (c, d) = fit
                .centroids
                .rows()
                .into_iter()
                .enumerate()
                .map(|(c, cen)| (c, (&row - &cen).mapv(|x| x * x).sum()))
                .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
            *label = c;
            objective += d;
        }
    }
    let (labels, centroids) = kmeans::canonicalize(&labels, &fit.centroids);
    Ok(KMeansResult {
        labels,
        centroids,
        objective,
    })
}

/// Output of the clustering step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    /// Cluster of each learner in `0..k`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub learner_ids: Vec<usize>,
    /// Row-normalized embedding used for the final k-means (L x K).
    pub embedding: Array2<f64>,
    /// All Laplacian eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub objective: f64,
    /// Present when K was selected rather than given.
    pub selection: Option<SelectionCurve>,
}

impl ClusterResult {
    /// Positions (not learner ids) of the members of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// `learner_id,cluster`.
    pub fn write_labels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["learner_id", "cluster"])?;
        for (id, l) in self.learner_ids.iter().zip(&self.labels) {
            w.write_record([id.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `index,eigenvalue`.
    pub fn write_eigenvalues_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue"])?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `learner_id,cluster,u1..uK`.
    pub fn write_embedding_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["learner_id".to_string(), "cluster".to_string()];
        header.extend((1..=self.embedding.ncols()).map(|c| format!("u{c}")));
        w.write_record(&header)?;
        for (i, row) in self.embedding.rows().into_iter().enumerate() {
            let mut rec = vec![self.learner_ids[i].to_string(), self.labels[i].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `k,dispersion,value,se` for the selection curve, if any.
    pub fn write_selection_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "dispersion", "value", "se"])?;
        if let Some(curve) = &self.selection {
            for p in &curve.points {
                w.write_record([
                    p.k.to_string(),
                    p.dispersion.to_string(),
                    p.value.to_string(),
                    p.se.map_or(String::new(), |s| s.to_string()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Spectral clustering of `s` into `k` groups, or into a selected number of
/// groups when `k` is `None`.
pub fn sec_cluster(
    s: &SimilarityMatrix,
    k: Option<usize>,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<ClusterResult> {
    let n = s.len();
    if n == 0 {
        return Err(Error::Config("empty similarity matrix".into()));
    }
    cfg.validate(n)?;
    let eig = laplacian_eig(s)?;
    let (k, selection) = match k {
        Some(k) => {
            if k == 0 || k > n {
                return Err(Error::InvalidK { k, n });
            }
            (k, None)
        }
        None => {
            let curve = select_k_from_eig(&eig, cfg, seed)?;
            (curve.chosen, Some(curve))
        }
    };
    let emb = embed_from_eig(&eig, k)?;
    let fit = cluster_embedding(&emb, k, cfg.restarts, seed::derive_named(seed, "final-kmeans"))?;
    Ok(ClusterResult {
        k,
        labels: fit.labels,
        learner_ids: s.ids().to_vec(),
        embedding: emb.rows,
        eigenvalues: eig.values.to_vec(),
        objective: fit.objective,
        selection,
    })
}
