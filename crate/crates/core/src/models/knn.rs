use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// k-nearest-neighbour regressor (Euclidean distance, uniform weights).
///
/// Keeps its training rows internally; they are never exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    x: Array2<f64>,
    y: Array1<f64>,
}

impl KnnModel {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, k: usize) -> Self {
        KnnModel {
            k: k.clamp(1, y.len()),
            x: x.to_owned(),
            y: y.to_owned(),
        }
    }

    /// Mean response of the `k` closest rows; distance ties go to the lower row index.
    pub fn predict(&self, q: ArrayView1<f64>) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let s: f64 = r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (s, i)
            })
            .collect();
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, by);
            d.truncate(self.k);
        }
        d.iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn full_neighbourhood_is_mean() {
        let x = array![[0.0], [1.0], [5.0], [9.0]];
        let y = array![1.0, 2.0, 3.0, 6.0];
        let m = KnnModel::fit(x.view(), y.view(), 4);
        assert_eq!(m.predict(array![100.0].view()), 3.0);
        let m = KnnModel::fit(x.view(), y.view(), 50);
        assert_eq!(m.predict(array![-3.0].view()), 3.0);
    }

    #[test]
    fn nearest_two() {
        let x = array![[0.0], [1.0], [5.0], [9.0]];
        let y = array![1.0, 2.0, 3.0, 6.0];
        let m = KnnModel::fit(x.view(), y.view(), 2);
        assert_eq!(m.predict(array![0.4].view()), 1.5);
        assert_eq!(m.predict(array![8.0].view()), 4.5);
    }
}
