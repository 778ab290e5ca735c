//! Spectral clustering of a hand-made similarity matrix, with the number
//! of clusters chosen by each selection rule.

use metacluster::exchange::SimilarityMatrix;
use metacluster::spectral::{sec_cluster, SelectionConfig};
use ndarray::Array2;

fn main() -> metacluster::Result<()> {
    let truth = [0, 0, 0, 1, 1, 1, 1, 2, 2];
    let s = Array2::from_shape_fn((9, 9), |(i, j)| match (i == j, truth[i] == truth[j]) {
        (true, _) => 1.0,
        (false, true) => 0.95,
        (false, false) => 0.05,
    });
    let s = SimilarityMatrix::from_array(s)?;
    for cfg in [SelectionConfig::default(), SelectionConfig::penalty(None)] {
        let r = sec_cluster(&s, None, &cfg, 1)?;
        println!("{:?}: K = {}, labels {:?}", cfg.method, r.k, r.labels);
        let eig: Vec<String> = r.eigenvalues.iter().map(|v| format!("{v:.3}")).collect();
        println!("  eigenvalues {}", eig.join(" "));
    }
    Ok(())
}
