//! Cluster learners end to end, save the result, reload it and predict
//! with the size-weighted ensemble of a learner's cluster.

use metacluster::collaborate::aggregate_predict;
use metacluster::dataset::{generate, SyntheticConfig};
use metacluster::models::MethodSpec;
use metacluster::pipeline::{run_sec, SavedClustering, SecConfig};

fn main() -> metacluster::Result<()> {
    let data = generate(&SyntheticConfig {
        learners: 10,
        samples_per_learner: 60,
        snr: 64.0,
        seed: 8,
        ..Default::default()
    })?;
    let cfg = SecConfig {
        seed: 3,
        ..SecConfig::new(vec![MethodSpec::lasso(), MethodSpec::forest()])
    };
    let out = run_sec(&data.learners, &cfg)?;
    println!("K = {}, labels {:?}", out.clusters.k, out.clusters.labels);

    let path = std::env::temp_dir().join("metacluster-example-model.json");
    out.to_saved().save(&path)?;
    let saved = SavedClustering::load(&path)?;
    let ensembles = saved.ensembles()?;

    let learner = &data.learners[0];
    let ens = &ensembles[saved.cluster_of(learner.learner_id()).expect("clustered")];
    println!("learner 1 collaborates with {:?}", ens.learner_ids());
    for i in 0..3 {
        let x = learner.features().row(i).to_owned();
        let y = aggregate_predict(ens, x.view())?;
        println!("y = {:.3}, ensemble prediction {:.3}", learner.responses()[i], y);
    }
    std::fs::remove_file(path)?;
    Ok(())
}
