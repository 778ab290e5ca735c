//! Generate the two-cluster linear design and write it as a learner CSV.

use metacluster::dataset::{generate, write_learners, Scenario, SyntheticConfig};

fn main() -> metacluster::Result<()> {
    let cfg = SyntheticConfig {
        learners: 6,
        samples_per_learner: 4,
        dim: 3,
        seed: 11,
        ..SyntheticConfig::for_scenario(Scenario::TwoClusterLinear)
    };
    let data = generate(&cfg)?;
    println!("true clusters: {:?}", data.labels);
    write_learners(&data.learners, std::io::stdout().lock())
}
