//! Experiment configuration, trial runners and CSV output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind, FilterKind, Method, Truncation};
pub use experiments::{
    moving_average, novelty_filter, run_continual_experiment, run_prediction_experiment, run_reconstruction_experiment,
    run_subspace_experiment, run_trials, sweep, trial_dataset, trial_rng, LearningCurve, ReconstructionTable,
    SubspaceTrajectory, SweepTable,
};
pub use output::{read_final_csv, write_curves, write_reconstruction, write_subspace, write_sweep, FinalRow};
