//! The *Exchange* step: learners score each other's predictors on their own
//! rows and only the resulting scalar losses are pooled.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SubDataset;
use crate::error::{Error, Result};
use crate::models::{mse, Predictor, SharedInfo};

/// A learner that can score a foreign predictor on its private rows.
///
/// This is the only way the exchange step touches data: a predictor goes
/// in, a mean squared loss comes out.
pub trait EvaluationHost: Sync {
    fn learner_id(&self) -> usize;
    fn dim(&self) -> usize;
    fn evaluate(&self, predictor: &Predictor) -> Result<f64>;
}

impl EvaluationHost for SubDataset {
    fn learner_id(&self) -> usize {
        SubDataset::learner_id(self)
    }

    fn dim(&self) -> usize {
        SubDataset::dim(self)
    }

    fn evaluate(&self, predictor: &Predictor) -> Result<f64> {
        mse(predictor, self)
    }
}

impl<H: EvaluationHost + ?Sized> EvaluationHost for &H {
    fn learner_id(&self) -> usize {
        (**self).learner_id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, predictor: &Predictor) -> Result<f64> {
        (**self).evaluate(predictor)
    }
}

/// Loss of learner i's predictor on learner j's rows.
pub fn cross_loss<H: EvaluationHost + ?Sized>(info: &SharedInfo, host: &H) -> Result<f64> {
    if info.predictor.dim() != host.dim() {
        return Err(Error::LearnerDimensionMismatch {
            source_learner: info.learner_id,
            source_dim: info.predictor.dim(),
            host_learner: host.learner_id(),
            host_dim: host.dim(),
        });
    }
    host.evaluate(&info.predictor)
}

/// `|e(i->j) - e_j| + |e(j->i) - e_i|`.
pub fn excess_loss(cross_ij: f64, fitted_j: f64, cross_ji: f64, fitted_i: f64) -> f64 {
    (cross_ij - fitted_j).abs() + (cross_ji - fitted_i).abs()
}

/// Dissimilarity between learners i and j, each hosting the other's predictor.
pub fn dissimilarity<Hi, Hj>(
    info_i: &SharedInfo,
    info_j: &SharedInfo,
    host_i: &Hi,
    host_j: &Hj,
) -> Result<f64>
where
    Hi: EvaluationHost + ?Sized,
    Hj: EvaluationHost + ?Sized,
{
    let ij = cross_loss(info_i, host_j)?;
    let ji = cross_loss(info_j, host_i)?;
    Ok(excess_loss(ij, info_j.fitted_mse, ji, info_i.fitted_mse))
}

fn check_square(m: &Array2<f64>, ids: &[usize]) -> Result<()> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::NotSquare(r, c));
    }
    if ids.len() != r {
        return Err(Error::LengthMismatch(ids.len(), r));
    }
    Ok(())
}

fn max_asymmetry(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

fn write_matrix<W: Write>(ids: &[usize], m: &Array2<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["learner_id".to_string()];
    header.extend(ids.iter().map(|id| id.to_string()));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pairwise dissimilarities `v_ij`, indexed in the order learners were given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    ids: Vec<usize>,
    values: Array2<f64>,
}

impl DissimilarityMatrix {
    /// Requires exact symmetry, a zero diagonal and non-negative entries.
    pub fn new(ids: Vec<usize>, values: Array2<f64>) -> Result<Self> {
        check_square(&values, &ids)?;
        let asym = max_asymmetry(&values);
        if asym > 0.0 {
            return Err(Error::Asymmetric(asym));
        }
        let n = values.nrows();
        if (0..n).any(|i| values[[i, i]] != 0.0) {
            return Err(Error::Config("dissimilarity diagonal must be zero".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(
                "dissimilarities must be finite and non-negative".into(),
            ));
        }
        Ok(DissimilarityMatrix { ids, values })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn off_diagonal(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.values[[i, j]]);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix(&self.ids, &self.values, out)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Similarities `s_ij = exp(-a v_ij)` with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    ids: Vec<usize>,
    values: Array2<f64>,
    bandwidth: Option<f64>,
}

impl SimilarityMatrix {
    /// Wrap a hand-built matrix. It must be exactly symmetric, have a unit
    /// diagonal and entries in [0, 1].
    pub fn from_values(ids: Vec<usize>, values: Array2<f64>) -> Result<Self> {
        check_square(&values, &ids)?;
        let asym = max_asymmetry(&values);
        if asym > 0.0 {
            return Err(Error::Asymmetric(asym));
        }
        let n = values.nrows();
        if (0..n).any(|i| values[[i, i]] != 1.0) {
            return Err(Error::Config("similarity diagonal must be one".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(Error::Config("similarities must lie in [0, 1]".into()));
        }
        Ok(SimilarityMatrix {
            ids,
            values,
            bandwidth: None,
        })
    }

    /// Same as [`from_values`](Self::from_values) with learner ids `1..=L`.
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        let ids = (1..=values.nrows()).collect();
        Self::from_values(ids, values)
    }

    /// Map dissimilarities through `exp(-a v)`.
    pub fn from_dissimilarity(v: &DissimilarityMatrix, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Config(format!("bandwidth must be positive, got {a}")));
        }
        // exp underflows to zero for huge a*v; keep entries strictly positive
        let values = v.values.mapv(|x| (-a * x).exp().max(f64::MIN_POSITIVE));
        Ok(SimilarityMatrix {
            ids: v.ids.clone(),
            values,
            bandwidth: Some(a),
        })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Reorder rows and columns: entry `(k, l)` of the result is entry
    /// `(perm[k], perm[l])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch(perm.len(), self.len()));
        }
        let values = Array2::from_shape_fn(self.values.dim(), |(k, l)| {
            self.values[[perm[k], perm[l]]]
        });
        Ok(SimilarityMatrix {
            ids: perm.iter().map(|&k| self.ids[k]).collect(),
            values,
            bandwidth: self.bandwidth,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix(&self.ids, &self.values, out)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// `a = ln 2 / median(v_ij)` over distinct pairs, so the median pair maps
/// to similarity one half. All-zero dissimilarities give `a = 1`. When the
/// median is zero but some pairs differ, the median of the positive
/// entries is used instead.
pub fn select_bandwidth(v: &DissimilarityMatrix) -> f64 {
    let off = v.off_diagonal();
    if off.iter().all(|x| *x == 0.0) {
        return 1.0;
    }
    let mut m = median(off.clone());
    if m == 0.0 {
        m = median(off.into_iter().filter(|x| *x > 0.0).collect());
    }
    std::f64::consts::LN_2 / m
}

/// Every learner's loss on every other learner, `e(i->j)` at `[i, j]`;
/// the diagonal holds the fitted losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeResult {
    pub similarity: SimilarityMatrix,
    pub dissimilarity: DissimilarityMatrix,
    pub cross_losses: Array2<f64>,
}

/// Run the exchange over all unordered pairs in parallel and assemble the
/// matrices. `hosts[k]` must belong to the learner of `infos[k]`. When `a`
/// is `None` it is chosen by [`select_bandwidth`].
pub fn build_similarity<H: EvaluationHost>(
    infos: &[SharedInfo],
    hosts: &[H],
    a: Option<f64>,
) -> Result<ExchangeResult> {
    let l = infos.len();
    if l < 2 {
        return Err(Error::Config(format!("need at least 2 learners, got {l}")));
    }
    if hosts.len() != l {
        return Err(Error::LengthMismatch(infos.len(), hosts.len()));
    }
    for (info, host) in infos.iter().zip(hosts) {
        if info.learner_id != host.learner_id() {
            return Err(Error::Config(format!(
                "shared info of learner {} paired with data of learner {}",
                info.learner_id,
                host.learner_id()
            )));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..l)
        .flat_map(|i| ((i + 1)..l).map(move |j| (i, j)))
        .collect();
    let losses: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let wrap = |e| Error::Pair(infos[i].learner_id, infos[j].learner_id, Box::new(e));
            let ij = cross_loss(&infos[i], &hosts[j]).map_err(wrap)?;
            let ji = cross_loss(&infos[j], &hosts[i]).map_err(wrap)?;
            Ok((ij, ji))
        })
        .collect::<Result<_>>()?;

    let mut cross = Array2::zeros((l, l));
    let mut v = Array2::zeros((l, l));
    for i in 0..l {
        cross[[i, i]] = infos[i].fitted_mse;
    }
    for (&(i, j), &(ij, ji)) in pairs.iter().zip(&losses) {
        cross[[i, j]] = ij;
        cross[[j, i]] = ji;
        let d = excess_loss(ij, infos[j].fitted_mse, ji, infos[i].fitted_mse);
        v[[i, j]] = d;
        v[[j, i]] = d;
    }
    let ids: Vec<usize> = infos.iter().map(|s| s.learner_id).collect();
    let dissimilarity = DissimilarityMatrix::new(ids, v)?;
    let a = match a {
        Some(a) => a,
        None => select_bandwidth(&dissimilarity),
    };
    let similarity = SimilarityMatrix::from_dissimilarity(&dissimilarity, a)?;
    Ok(ExchangeResult {
        similarity,
        dissimilarity,
        cross_losses: cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_two_cluster_linear, Scenario, SyntheticConfig};
    use crate::models::{fit, select_method, MethodSpec};
    use ndarray::{array, Array1};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn info_for(d: &SubDataset, m: MethodSpec) -> SharedInfo {
        select_method(&[m], d, 0).unwrap()
    }

    fn line(id: usize, slope: f64, n: usize) -> SubDataset {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64);
        let y = x.column(0).mapv(|v| slope * v);
        SubDataset::new(id, x, y).unwrap()
    }

    #[test]
    fn self_cross_loss_is_fitted_loss() {
        let d = line(1, 2.0, 20);
        let info = info_for(&d, MethodSpec::knn(3));
        assert_eq!(cross_loss(&info, &d).unwrap(), info.fitted_mse);
    }

    #[test]
    fn cross_loss_matches_mse() {
        let a = line(1, 2.0, 20);
        let b = line(2, -1.0, 30);
        let info = info_for(&a, MethodSpec::forest());
        assert_eq!(cross_loss(&info, &b).unwrap(), mse(&info.predictor, &b).unwrap());
        let same = line(3, 2.0, 30);
        let ols = info_for(&a, MethodSpec::ols());
        assert!(cross_loss(&ols, &same).unwrap() < 1e-20);
    }

    #[test]
    fn dimension_mismatch_names_learners() {
        let a = line(4, 1.0, 10);
        let b = SubDataset::new(9, Array2::zeros((5, 2)), Array1::zeros(5)).unwrap();
        let info = info_for(&a, MethodSpec::ols());
        let msg = cross_loss(&info, &b).unwrap_err().to_string();
        assert!(msg.contains("learner 4") && msg.contains("learner 9"), "{msg}");
    }

    #[test]
    fn excess_loss_hand_value() {
        assert!((excess_loss(0.5, 0.2, 0.4, 0.1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dissimilarity_symmetric_and_zero_for_copies() {
        let a = line(1, 2.0, 20);
        let b = line(2, -1.0, 20);
        let ia = info_for(&a, MethodSpec::knn(3));
        let ib = info_for(&b, MethodSpec::knn(3));
        assert_eq!(
            dissimilarity(&ia, &ib, &a, &b).unwrap(),
            dissimilarity(&ib, &ia, &b, &a).unwrap()
        );
        let a2 = a.clone().with_learner_id(7);
        let ia2 = info_for(&a2, MethodSpec::knn(3));
        assert_eq!(dissimilarity(&ia, &ia2, &a, &a2).unwrap(), 0.0);
    }

    #[test]
    fn bandwidth_rules() {
        let ids = vec![1, 2, 3];
        let v = DissimilarityMatrix::new(ids.clone(), Array2::from_shape_fn((3, 3), |(i, j)| {
            if i == j { 0.0 } else { 3.0 }
        }))
        .unwrap();
        let a = select_bandwidth(&v);
        assert!((a - std::f64::consts::LN_2 / 3.0).abs() < 1e-15);
        let s = SimilarityMatrix::from_dissimilarity(&v, a).unwrap();
        assert!((s.values()[[0, 1]] - 0.5).abs() < 1e-15);

        let zero = DissimilarityMatrix::new(ids.clone(), Array2::zeros((3, 3))).unwrap();
        assert_eq!(select_bandwidth(&zero), 1.0);
        let s = SimilarityMatrix::from_dissimilarity(&zero, 1.0).unwrap();
        assert!(s.values().iter().all(|x| *x == 1.0));

        let w = array![[0.0, 1.0, 2.0], [1.0, 0.0, 5.0], [2.0, 5.0, 0.0]];
        let small = DissimilarityMatrix::new(ids.clone(), w.clone()).unwrap();
        let big = DissimilarityMatrix::new(ids.clone(), w * 10.0).unwrap();
        assert!((select_bandwidth(&small) / select_bandwidth(&big) - 10.0).abs() < 1e-12);
        let s1 = SimilarityMatrix::from_dissimilarity(&small, select_bandwidth(&small)).unwrap();
        let s2 = SimilarityMatrix::from_dissimilarity(&big, select_bandwidth(&big)).unwrap();
        for (x, y) in s1.values().iter().zip(s2.values()) {
            assert!((x - y).abs() < 1e-12);
        }

        // most pairs identical: fall back to positive entries
        let mut m = Array2::zeros((4, 4));
        m[[0, 1]] = 2.0;
        m[[1, 0]] = 2.0;
        let sparse = DissimilarityMatrix::new(vec![1, 2, 3, 4], m).unwrap();
        assert!((select_bandwidth(&sparse) - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_identity() {
        let a = 0.7;
        let v = std::f64::consts::LN_2 / a;
        let d = DissimilarityMatrix::new(vec![1, 2], array![[0.0, v], [v, 0.0]]).unwrap();
        let s = SimilarityMatrix::from_dissimilarity(&d, a).unwrap();
        assert!((s.values()[[0, 1]] - 0.5).abs() < 1e-15);
        assert_eq!(s.values()[[0, 0]], 1.0);
    }

    struct CountingHost<'a> {
        data: &'a SubDataset,
        calls: AtomicUsize,
    }

    impl EvaluationHost for CountingHost<'_> {
        fn learner_id(&self) -> usize {
            self.data.learner_id()
        }
        fn dim(&self) -> usize {
            self.data.dim()
        }
        fn evaluate(&self, p: &Predictor) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            mse(p, self.data)
        }
    }

    #[test]
    fn each_host_evaluates_every_foreign_predictor_once() {
        let data: Vec<SubDataset> = (0..6).map(|k| line(k + 1, k as f64, 12)).collect();
        let infos: Vec<SharedInfo> = data.iter().map(|d| info_for(d, MethodSpec::ols())).collect();
        let hosts: Vec<CountingHost> = data
            .iter()
            .map(|d| CountingHost {
                data: d,
                calls: AtomicUsize::new(0),
            })
            .collect();
        build_similarity(&infos, &hosts, None).unwrap();
        for h in &hosts {
            assert_eq!(h.calls.load(Ordering::SeqCst), 5);
        }
    }

    #[test]
    fn parallel_matches_serial_and_is_symmetric() {
        let mut cfg = SyntheticConfig::for_scenario(Scenario::TwoClusterLinear);
        cfg.learners = 8;
        cfg.samples_per_learner = 30;
        let synth = gen_two_cluster_linear(&cfg).unwrap();
        let infos: Vec<SharedInfo> = synth
            .learners
            .iter()
            .map(|d| select_method(&[MethodSpec::forest()], d, 3).unwrap())
            .collect();
        let par = build_similarity(&infos, &synth.learners, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| build_similarity(&infos, &synth.learners, None).unwrap());
        assert_eq!(par, serial);
        let s = par.similarity.values();
        for i in 0..8 {
            assert_eq!(s[[i, i]], 1.0);
            for j in 0..8 {
                assert_eq!(s[[i, j]], s[[j, i]]);
                assert!(s[[i, j]] > 0.0 && s[[i, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn noiseless_three_blocks_separate() {
        let slopes = [1.0, -2.0, 4.0];
        let data: Vec<SubDataset> = (0..9)
            .map(|k| {
                let x = Array2::from_shape_fn((20, 2), |(i, j)| ((i * 7 + j * 3 + k) % 11) as f64);
                let y = x.column(0).mapv(|v| slopes[k / 3] * v) + x.column(1);
                SubDataset::new(k + 1, x, y).unwrap()
            })
            .collect();
        let infos: Vec<SharedInfo> = data.iter().map(|d| info_for(d, MethodSpec::ols())).collect();
        let out = build_similarity(&infos, &data, None).unwrap();
        let same = |i: usize, j: usize| i / 3 == j / 3;
        let s = out.similarity.values();
        let mut min_across_v = f64::INFINITY;
        for i in 0..9 {
            for j in 0..9 {
                if same(i, j) {
                    assert!(s[[i, j]] >= 0.99, "{i} {j} {}", s[[i, j]]);
                } else {
                    // the median pair sits across blocks and maps to 1/2
                    assert!(s[[i, j]] <= 0.75, "{i} {j} {}", s[[i, j]]);
                    min_across_v = min_across_v.min(out.dissimilarity.values()[[i, j]]);
                }
            }
        }
        let sharp = (100.0f64).ln() / min_across_v;
        let s = SimilarityMatrix::from_dissimilarity(&out.dissimilarity, sharp).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let x = s.values()[[i, j]];
                assert!(if same(i, j) { x >= 0.99 } else { x <= 0.01 + 1e-12 }, "{i} {j} {x}");
            }
        }
    }

    #[test]
    fn pair_error_is_reported() {
        let a = line(1, 1.0, 10);
        let b = SubDataset::new(2, Array2::zeros((5, 3)), Array1::zeros(5)).unwrap();
        let infos = vec![info_for(&a, MethodSpec::ols()), {
            let p = fit(&MethodSpec::ols(), &b, 0).unwrap();
            SharedInfo {
                learner_id: 2,
                method: MethodSpec::ols(),
                fitted_mse: mse(&p, &b).unwrap(),
                predictor: p,
                sample_size: 5,
                scaler: None,
                cv_scores: vec![],
            }
        }];
        let err = build_similarity(&infos, &[a, b], None).unwrap_err();
        assert!(matches!(err, Error::Pair(1, 2, _)));
    }

    #[test]
    fn csv_dump_has_ids() {
        let s = SimilarityMatrix::from_values(vec![3, 8], array![[1.0, 0.25], [0.25, 1.0]]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "learner_id,3,8\n3,1,0.25\n8,0.25,1\n");
    }
}
