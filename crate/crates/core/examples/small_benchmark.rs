//! A reduced accuracy sweep over the signal-to-noise ratio.

use metacluster::bench::{run_sim1, Sim1Config};
use metacluster::models::MethodSpec;

fn main() -> metacluster::Result<()> {
    let cfg = Sim1Config {
        snrs: vec![1.0, 16.0, 128.0],
        dims: vec![5],
        replications: 5,
        menu: vec![MethodSpec::lasso()],
        dump_replication: None,
        ..Default::default()
    };
    let report = run_sim1(&cfg)?;
    print!("{}", report.summary());
    Ok(())
}
