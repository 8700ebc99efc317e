//! Spectral eigenfunction decomposition for kernel adaptive filtering.
//!
//! The kernel feature space is represented explicitly by the dominant
//! eigenfunctions of the Gram matrix ([`spectral`]), kept current by rank-1
//! eigendecomposition updates ([`rank1`], [`ispeed`]), and paired with linear
//! adaptive filters ([`filters`]). [`features`], [`timeseries`] and [`harness`]
//! provide the baselines, data and experiments.

pub mod error;
pub mod features;
pub mod filters;
pub mod harness;
pub mod ispeed;
pub mod kernel;
pub mod rank1;
pub mod spectral;
pub mod timeseries;

pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureMap, FeatureMapSpec};
pub use filters::{ExRlsState, KernelFilterState, LinearFilter, LmsState, RlsState, StepOutput};
pub use harness::{ExperimentConfig, ExperimentKind, LearningCurve, Method};
pub use ispeed::{NoveltyGate, SpeedState, TransferMode};
pub use kernel::{cross_gram, gram_matrix, kernel_eval, kernel_vector, GramMatrix, KernelConfig, KernelFamily};
pub use rank1::{grow_eigensystem, Rank1Perturbation, Rank1Update, SecularUpdate};
pub use spectral::{build_eigenmap, decompose, embed, EigenSystem, Eigenmap};
pub use timeseries::{generate_mg, MackeyGlassConfig, RegressionDataset, SplitSpec};
