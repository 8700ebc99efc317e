//! Benchmark fixtures.

use speed_core::harness::{trial_dataset, trial_rng, ExperimentConfig};
use speed_core::RegressionDataset;

/// Standardized Mackey-Glass regression data of the default experiment.
pub fn mg_dataset(seed: u64) -> RegressionDataset {
    let cfg = ExperimentConfig::default();
    let clean = speed_core::generate_mg(&cfg.mg).expect("default series");
    trial_dataset(&cfg, &clean, &mut trial_rng(seed, 0)).expect("default split")
}

/// The first `n` delay vectors of [`mg_dataset`].
pub fn mg_points(n: usize) -> Vec<Vec<f64>> {
    mg_dataset(0).train_inputs.into_iter().take(n).collect()
}
