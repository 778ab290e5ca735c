//! Pick a method per learner, then score every pair of learners by how
//! much worse each model does on the other's data.

use metacluster::dataset::{generate, standardize, SubDataset, SyntheticConfig};
use metacluster::exchange::build_similarity;
use metacluster::models::{select_method, MethodSpec};

fn main() -> metacluster::Result<()> {
    let data = generate(&SyntheticConfig {
        learners: 8,
        samples_per_learner: 80,
        snr: 64.0,
        seed: 4,
        ..Default::default()
    })?;
    let menu = [MethodSpec::lasso(), MethodSpec::knn(5), MethodSpec::forest()];
    let prepared: Vec<SubDataset> = data.learners.iter().map(standardize).collect::<Result<_, _>>()?;
    let infos = prepared
        .iter()
        .map(|d| select_method(&menu, d, d.learner_id() as u64))
        .collect::<Result<Vec<_>, _>>()?;
    for info in &infos {
        println!(
            "learner {}: {} (in-sample mse {:.4})",
            info.learner_id, info.method, info.fitted_mse
        );
    }
    let ex = build_similarity(&infos, &prepared, None)?;
    println!("bandwidth {:.4}", ex.similarity.bandwidth().unwrap_or(1.0));
    for row in ex.similarity.values().rows() {
        let cells: Vec<String> = row.iter().map(|s| format!("{s:.2}")).collect();
        println!("{}", cells.join(" "));
    }
    println!("true clusters: {:?}", data.labels);
    Ok(())
}
