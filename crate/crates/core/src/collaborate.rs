//! Using a clustering: weighted within-cluster prediction and placing new
//! learners into existing clusters.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::{cross_loss, excess_loss, EvaluationHost};
use crate::models::SharedInfo;
use crate::spectral::ClusterResult;

/// The members of one cluster, weighted by sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEnsemble {
    cluster: usize,
    members: Vec<SharedInfo>,
    weights: Vec<f64>,
}

impl ClusterEnsemble {
    pub fn new(cluster: usize, members: Vec<SharedInfo>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyCluster(cluster));
        }
        if let Some(m) = members.iter().find(|m| m.sample_size == 0) {
            return Err(Error::InvalidData {
                learner: m.learner_id,
                reason: "zero sample size".into(),
            });
        }
        let total: usize = members.iter().map(|m| m.sample_size).sum();
        let weights = members
            .iter()
            .map(|m| m.sample_size as f64 / total as f64)
            .collect();
        Ok(ClusterEnsemble {
            cluster,
            members,
            weights,
        })
    }

    /// One ensemble per cluster. `infos` is aligned with the learners that
    /// were clustered.
    pub fn from_result(result: &ClusterResult, infos: &[SharedInfo]) -> Result<Vec<Self>> {
        if infos.len() != result.labels.len() {
            return Err(Error::LengthMismatch(infos.len(), result.labels.len()));
        }
        result
            .members()
            .into_iter()
            .enumerate()
            .map(|(c, idx)| Self::new(c, idx.iter().map(|&i| infos[i].clone()).collect()))
            .collect()
    }

    pub fn cluster(&self) -> usize {
        self.cluster
    }

    pub fn members(&self) -> &[SharedInfo] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn learner_ids(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.learner_id).collect()
    }
}

/// `sum_i n_i / sum(n) * f_i(x)` for a raw-scale input `x`.
pub fn aggregate_predict(ens: &ClusterEnsemble, x: ArrayView1<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for (m, w) in ens.members.iter().zip(&ens.weights) {
        acc += w * m.predict_raw(x)?;
    }
    Ok(acc)
}

/// Where a new learner was placed and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub cluster: usize,
    /// Summed similarity to each cluster.
    pub scores: Vec<f64>,
    /// Similarity to each existing learner, in clustering order.
    pub similarities: Vec<f64>,
}

/// Put a new learner into the cluster with the largest summed similarity,
/// using the bandwidth `a` from training. Ties go to the lowest cluster id.
///
/// `members` and `hosts` are aligned with `result.labels`.
pub fn assign_new_learner<N, H>(
    info_new: &SharedInfo,
    host_new: &N,
    result: &ClusterResult,
    members: &[SharedInfo],
    hosts: &[H],
    a: f64,
) -> Result<Assignment>
where
    N: EvaluationHost + ?Sized,
    H: EvaluationHost,
{
    let l = result.labels.len();
    if members.len() != l {
        return Err(Error::LengthMismatch(members.len(), l));
    }
    if hosts.len() != l {
        return Err(Error::LengthMismatch(hosts.len(), l));
    }
    if !(a > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {a}")));
    }
    let mut similarities = Vec::with_capacity(l);
    for (m, h) in members.iter().zip(hosts) {
        let wrap = |e| Error::Pair(info_new.learner_id, m.learner_id, Box::new(e));
        let new_on_j = cross_loss(info_new, h).map_err(wrap)?;
        let j_on_new = cross_loss(m, host_new).map_err(wrap)?;
        let v = excess_loss(new_on_j, m.fitted_mse, j_on_new, info_new.fitted_mse);
        similarities.push((-a * v).exp());
    }
    let mut scores = vec![0.0; result.k];
    for (s, &label) in similarities.iter().zip(&result.labels) {
        scores[label] += s;
    }
    let mut cluster = 0;
    for (c, s) in scores.iter().enumerate() {
        if *s > scores[cluster] {
            cluster = c;
        }
    }
    Ok(Assignment {
        cluster,
        scores,
        similarities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubDataset;
    use crate::models::{select_method, MethodSpec};
    use crate::spectral::{sec_cluster, SelectionConfig};
    use crate::exchange::build_similarity;
    use ndarray::{array, Array1, Array2};

    fn constant(id: usize, value: f64, n: usize) -> (SubDataset, SharedInfo) {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let d = SubDataset::new(id, x, Array1::from_elem(n, value)).unwrap();
        let info = select_method(&[MethodSpec::ols()], &d, 0).unwrap();
        (d, info)
    }

    #[test]
    fn weighted_averages() {
        let (_, a) = constant(1, 1.0, 10);
        let (_, b) = constant(2, 3.0, 10);
        let e = ClusterEnsemble::new(0, vec![a.clone(), b]).unwrap();
        assert!((aggregate_predict(&e, array![5.0].view()).unwrap() - 2.0).abs() < 1e-12);

        let (_, c) = constant(3, 0.0, 30);
        let (_, d) = constant(4, 4.0, 10);
        let e = ClusterEnsemble::new(0, vec![c, d]).unwrap();
        assert!((e.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((aggregate_predict(&e, array![0.0].view()).unwrap() - 1.0).abs() < 1e-12);

        let single = ClusterEnsemble::new(0, vec![a.clone()]).unwrap();
        let x = array![2.5];
        assert_eq!(
            aggregate_predict(&single, x.view()).unwrap(),
            a.predict_raw(x.view()).unwrap()
        );
        assert!(aggregate_predict(&single, array![1.0, 2.0].view()).is_err());
        assert!(ClusterEnsemble::new(0, vec![]).is_err());
    }

    fn slope_learner(id: usize, slope: f64) -> SubDataset {
        let x = Array2::from_shape_fn((16, 1), |(i, _)| i as f64 / 4.0);
        let y = x.column(0).mapv(|v| slope * v);
        SubDataset::new(id, x, y).unwrap()
    }

    #[test]
    fn noiseless_newcomer_joins_its_generator() {
        let data: Vec<SubDataset> = [1.0, 1.0, 1.0, -2.0, -2.0, -2.0]
            .iter()
            .enumerate()
            .map(|(k, &s)| slope_learner(k + 1, s))
            .collect();
        let infos: Vec<SharedInfo> = data
            .iter()
            .map(|d| select_method(&[MethodSpec::ols()], d, 0).unwrap())
            .collect();
        let ex = build_similarity(&infos, &data, None).unwrap();
        let clusters = sec_cluster(&ex.similarity, Some(2), &SelectionConfig::default(), 0).unwrap();
        let a = ex.similarity.bandwidth().unwrap();
        for (slope, want) in [(1.0, clusters.labels[0]), (-2.0, clusters.labels[5])] {
            let d = slope_learner(99, slope);
            let info = select_method(&[MethodSpec::ols()], &d, 0).unwrap();
            let got = assign_new_learner(&info, &d, &clusters, &infos, &data, a).unwrap();
            assert_eq!(got.cluster, want);
        }

        // relabeling clusters relabels the answer
        let mut flipped = clusters.clone();
        flipped.labels.iter_mut().for_each(|l| *l = 1 - *l);
        let d = slope_learner(99, 1.0);
        let info = select_method(&[MethodSpec::ols()], &d, 0).unwrap();
        let a1 = assign_new_learner(&info, &d, &clusters, &infos, &data, a).unwrap();
        let a2 = assign_new_learner(&info, &d, &flipped, &infos, &data, a).unwrap();
        assert_eq!(a1.cluster, 1 - a2.cluster);
    }

    #[test]
    fn single_cluster_always_wins() {
        let data = vec![slope_learner(1, 1.0), slope_learner(2, 5.0)];
        let infos: Vec<SharedInfo> = data
            .iter()
            .map(|d| select_method(&[MethodSpec::ols()], d, 0).unwrap())
            .collect();
        let ex = build_similarity(&infos, &data, None).unwrap();
        let clusters = sec_cluster(&ex.similarity, Some(1), &SelectionConfig::default(), 0).unwrap();
        let d = slope_learner(3, -7.0);
        let info = select_method(&[MethodSpec::ols()], &d, 0).unwrap();
        let got = assign_new_learner(&info, &d, &clusters, &infos, &data, 1.0).unwrap();
        assert_eq!(got.cluster, 0);
    }
}
