//! Score an estimated clustering against the truth up to relabelling.

use metacluster::bench::clustering_accuracy;

fn main() -> metacluster::Result<()> {
    let truth = [0, 0, 0, 1, 1, 2, 2, 2];
    let found = [2, 2, 1, 0, 0, 1, 1, 1];
    let acc = clustering_accuracy(&found, &truth)?;
    println!("matched fraction {:.3}, exact {}", acc.fraction, acc.exact);
    Ok(())
}
