//! Incremental eigenmaps: grow the dictionary one point at a time and carry the
//! learned weights across the change of basis.
//!
//! A weight vector `w` in eigenmap coordinates corresponds to the function
//! `f = sum_j (k_w)_j k(x_j, .)` with preimage `k_w = V_m Lambda_m^{1/2} w`
//! (which is also `f` evaluated at the dictionary points). After the dictionary
//! grows, the new weights are the new map applied to the padded preimage.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, numerical, Result};
use crate::kernel::{gram_matrix, kernel_vector, squared_distance, KernelConfig};
use crate::rank1::{grow_eigensystem_with, SecularUpdate};
use crate::spectral::{build_eigenmap, decompose, embed, EigenSystem, Eigenmap};

/// How the preimage is extended to the new dictionary point during a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferMode {
    /// Pad with zero: the new point contributes nothing until it is trained.
    #[default]
    Truncate,
    /// Pad with the preimage value of the nearest existing dictionary point.
    NearestNeighbor,
}

impl std::str::FromStr for TransferMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "truncate" => Ok(Self::Truncate),
            "nearest" | "nearest_neighbor" | "nearestneighbor" | "nn" => Ok(Self::NearestNeighbor),
            _ => arg(format!("unknown transfer mode '{s}' (expected truncate or nearest_neighbor)")),
        }
    }
}

/// Admits a point only if its squared distance to every dictionary point is at
/// least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoveltyGate {
    threshold: f64,
}

impl NoveltyGate {
    pub fn new(threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return arg(format!("novelty threshold must be nonnegative, got {threshold}"));
        }
        Ok(Self { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn admits(&self, dictionary: &[Vec<f64>], x: &[f64]) -> bool {
        min_squared_distance(dictionary, x).is_none_or(|(_, d)| d >= self.threshold)
    }
}

/// Index (lowest on ties) and value of the minimum squared distance to `x`.
fn min_squared_distance(points: &[Vec<f64>], x: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = squared_distance(p, x);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}

/// `V_m Lambda_m^{1/2}`, the right inverse of the map matrix (`Psi * R = I_m`).
pub fn right_inverse(map: &Eigenmap) -> DMatrix<f64> {
    let mut r = map.psi().transpose();
    for (j, lambda) in map.eigenvalues().iter().enumerate() {
        r.column_mut(j).scale_mut(*lambda);
    }
    r
}

/// Preimage `k_w = V_m Lambda_m^{1/2} w` of a weight vector.
pub fn weight_preimage(map: &Eigenmap, w: &DVector<f64>) -> Result<DVector<f64>> {
    if w.len() != map.dim() {
        return arg(format!("weight vector has length {}, map has dimension {}", w.len(), map.dim()));
    }
    Ok(right_inverse(map) * w)
}

/// State of an incrementally grown eigenmap with its weight vector.
#[derive(Debug, Clone)]
pub struct SpeedState {
    system: EigenSystem,
    map: Eigenmap,
    weights: DVector<f64>,
    dictionary: Vec<Vec<f64>>,
    kernel: KernelConfig,
    m: usize,
    mode: TransferMode,
    updater: SecularUpdate,
    reorthonormalize_every: Option<usize>,
    grows: usize,
    interlacing_violations: usize,
}

impl SpeedState {
    /// Batch-decomposes the dictionary's Gram matrix and starts from zero weights.
    pub fn new(kernel: KernelConfig, dictionary: Vec<Vec<f64>>, m: usize, mode: TransferMode) -> Result<Self> {
        let system = decompose(&gram_matrix(&kernel, &dictionary)?)?;
        Self::from_system(kernel, dictionary, system, m, mode)
    }

    pub fn from_system(
        kernel: KernelConfig,
        dictionary: Vec<Vec<f64>>,
        system: EigenSystem,
        m: usize,
        mode: TransferMode,
    ) -> Result<Self> {
        let map = build_eigenmap(&system, &dictionary, &kernel, m)?;
        Ok(Self {
            system,
            map,
            weights: DVector::zeros(m),
            dictionary,
            kernel,
            m,
            mode,
            updater: SecularUpdate::default(),
            reorthonormalize_every: Some(50),
            grows: 0,
            interlacing_violations: 0,
        })
    }

    /// Re-orthonormalize the eigenvectors after every `every` grows (`None` disables).
    pub fn with_reorthonormalization(mut self, every: Option<usize>) -> Self {
        self.reorthonormalize_every = every.filter(|&r| r > 0);
        self
    }

    pub fn with_updater(mut self, updater: SecularUpdate) -> Self {
        self.updater = updater;
        self
    }

    pub fn eigenmap(&self) -> &Eigenmap {
        &self.map
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.system
    }

    pub fn dictionary(&self) -> &[Vec<f64>] {
        &self.dictionary
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn transfer_mode(&self) -> TransferMode {
        self.mode
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn set_weights(&mut self, w: DVector<f64>) -> Result<()> {
        if w.len() != self.m {
            return arg(format!("weight vector has length {}, expected {}", w.len(), self.m));
        }
        self.weights = w;
        Ok(())
    }

    pub fn weights_mut(&mut self) -> &mut DVector<f64> {
        &mut self.weights
    }

    /// Number of grows applied since construction.
    pub fn grows(&self) -> usize {
        self.grows
    }

    /// Interlacing violations observed across all rank-1 updates so far.
    pub fn interlacing_violations(&self) -> usize {
        self.interlacing_violations
    }

    pub fn embed(&self, x: &[f64]) -> Result<DVector<f64>> {
        embed(&self.map, x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.embed(x)?.dot(&self.weights))
    }

    /// Adds `x` to the dictionary: grows the eigensystem, rebuilds the top-`m`
    /// eigenmap and transfers the weights. On error the state is unchanged.
    pub fn ispeed_step(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.map.input_dim() {
            return arg(format!("input has dimension {}, dictionary has {}", x.len(), self.map.input_dim()));
        }
        let k_vec = kernel_vector(&self.kernel, &self.dictionary, x)?;
        let k_self = self.kernel.self_similarity(x);
        let (mut system, trace) = grow_eigensystem_with(&self.updater, &self.system, &k_vec, k_self)?;
        let grows = self.grows + 1;
        if self.reorthonormalize_every.is_some_and(|r| grows.is_multiple_of(r)) {
            system.reorthonormalize();
        }
        let rank = system.usable_rank();
        if rank < self.m {
            return numerical(format!(
                "after growing to {} points only {rank} eigenvalues exceed the cutoff; m = {} cannot be kept",
                system.len(),
                self.m
            ));
        }
        let mut dictionary = self.dictionary.clone();
        dictionary.push(x.to_vec());
        let map = build_eigenmap(&system, &dictionary, &self.kernel, self.m)?;
        let weights = transfer_weights(self, &map, x)?;
        self.system = system;
        self.map = map;
        self.weights = weights;
        self.dictionary = dictionary;
        self.grows = grows;
        self.interlacing_violations += trace.interlacing_violations;
        Ok(())
    }

    /// Runs [`ispeed_step`](Self::ispeed_step) if the gate admits `x`; returns whether it did.
    pub fn sispeed_step(&mut self, gate: &NoveltyGate, x: &[f64]) -> Result<bool> {
        if !gate.admits(&self.dictionary, x) {
            return Ok(false);
        }
        self.ispeed_step(x)?;
        Ok(true)
    }
}

/// Weights for `new_map` (built on the old dictionary plus `new_point`)
/// representing the same function as the old state's weights.
pub fn transfer_weights(old: &SpeedState, new_map: &Eigenmap, new_point: &[f64]) -> Result<DVector<f64>> {
    let n = old.dictionary.len();
    if new_map.dictionary_len() != n + 1 {
        return arg(format!(
            "new map has {} columns, expected {} (old dictionary plus one point)",
            new_map.dictionary_len(),
            n + 1
        ));
    }
    let k_w = weight_preimage(&old.map, &old.weights)?;
    let pad = match old.mode {
        TransferMode::Truncate => 0.0,
        TransferMode::NearestNeighbor => {
            let (i, _) = min_squared_distance(&old.dictionary, new_point).expect("dictionary is non-empty");
            k_w[i]
        }
    };
    let psi = new_map.psi();
    Ok(psi.columns(0, n) * k_w + psi.column(n) * pad)
}

/// Outcome of offering a point to a [`DeferredUpdates`] schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Rejected,
    /// Queued; not yet applied.
    Deferred,
    /// The queue was flushed; this many points were grown into the state.
    Applied(usize),
}

/// Novelty-gated updates applied in batches of `batch` admitted points, each
/// batch applied as successive grows.
#[derive(Debug, Clone)]
pub struct DeferredUpdates {
    gate: NoveltyGate,
    batch: usize,
    pending: Vec<Vec<f64>>,
}

impl DeferredUpdates {
    pub fn new(gate: NoveltyGate, batch: usize) -> Result<Self> {
        if batch == 0 {
            return arg("update batch size must be positive");
        }
        Ok(Self { gate, batch, pending: Vec::new() })
    }

    pub fn pending(&self) -> &[Vec<f64>] {
        &self.pending
    }

    /// Gates `x` against the dictionary and the queued points.
    pub fn offer(&mut self, state: &mut SpeedState, x: &[f64]) -> Result<Admission> {
        if !(self.gate.admits(state.dictionary(), x) && self.gate.admits(&self.pending, x)) {
            return Ok(Admission::Rejected);
        }
        self.pending.push(x.to_vec());
        if self.pending.len() < self.batch {
            return Ok(Admission::Deferred);
        }
        self.flush(state).map(Admission::Applied)
    }

    /// Grows every queued point into `state`; returns how many were applied.
    pub fn flush(&mut self, state: &mut SpeedState) -> Result<usize> {
        let points = std::mem::take(&mut self.pending);
        for p in &points {
            state.ispeed_step(p)?;
        }
        Ok(points.len())
    }
}
