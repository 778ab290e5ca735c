//! Experiment runners, the clustering-accuracy metric and report output.

pub mod accuracy;
pub mod adversarial;
pub mod fairness;
pub mod report;
pub mod sim;

pub use accuracy::{clustering_accuracy, Accuracy};
pub use adversarial::{adversarial_cell, run_adversarial, AdversarialConfig};
pub use fairness::{fairness_cell, run_fairness, FairnessConfig};
pub use report::{aggregate, sig4, Aggregate, ExperimentReport, Record};
pub use sim::{
    dump_files, nested_menus, run_sim1, run_sim2, sim1_cell, sim2_cell, Sim1Config, Sim2Config,
};
