//! Simulation designs, accuracy metrics and the experiment runner.

pub mod metrics;
pub mod runner;
pub mod scenario;

pub use metrics::{metric_prediction, metric_subspace, statistic_matrix};
pub use runner::{
    aggregate, dims_label, rep_seed, run_experiment, run_rep, AggregateRow, ExperimentConfig,
    ExperimentResult, RepRow, Task,
};
pub use scenario::{gen_binary, gen_continuous, gen_mixed, k1_matrix, Scenario, ScenarioName};
