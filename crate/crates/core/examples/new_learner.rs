//! Place a learner that arrives after clustering into the cluster whose
//! members' models transfer best to its data.

use metacluster::collaborate::assign_new_learner;
use metacluster::dataset::{generate, SyntheticConfig};
use metacluster::models::{select_method, MethodSpec};
use metacluster::pipeline::{prepare, run_sec, SecConfig};

fn main() -> metacluster::Result<()> {
    let data = generate(&SyntheticConfig {
        learners: 12,
        samples_per_learner: 60,
        snr: 64.0,
        seed: 21,
        ..Default::default()
    })?;
    // hold out one learner from each true cluster
    let newcomers = [0usize, 11];
    let train: Vec<_> = (0..12)
        .filter(|i| !newcomers.contains(i))
        .map(|i| data.learners[i].clone())
        .collect();
    let cfg = SecConfig::new(vec![MethodSpec::ols()]);
    let out = run_sec(&train, &cfg)?;
    println!("clusters of the training learners: {:?}", out.clusters.labels);

    for &i in &newcomers {
        let host = prepare(&data.learners[i], cfg.standardize)?;
        let info = select_method(&cfg.menu, &host, 99)?;
        let a = assign_new_learner(&info, &host, &out.clusters, &out.infos, &out.prepared, out.bandwidth())?;
        println!(
            "learner {} (true cluster {}) -> cluster {}, scores {:?}",
            host.learner_id(),
            data.labels[i],
            a.cluster,
            a.scores
        );
    }
    Ok(())
}
