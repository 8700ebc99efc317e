//! Kernel evaluation, kernel vectors and Gram matrices.
//!
//! The Gaussian kernel is `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`, where the
//! squared norm is accumulated as `sum_i (x_i - y_i)^2` in index order. Because
//! `(a - b)^2 == (b - a)^2` in IEEE arithmetic the result is bit-identical under
//! argument swap.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, Result};

/// Kernel family. Only the Gaussian kernel is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Gaussian,
}

/// A kernel family together with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelConfig {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return arg(format!("kernel bandwidth must be positive and finite, got {bandwidth}"));
        }
        Ok(Self { family: KernelFamily::Gaussian, bandwidth })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Kernel value without dimension checks; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let d2 = squared_distance(x, y);
                (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
        }
    }

    /// `k(x, x)`; equal to 1 for the Gaussian family.
    pub fn self_similarity(&self, _x: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => 1.0,
        }
    }
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return arg(format!("dimension mismatch: {} vs {}", x.len(), y.len()));
    }
    if x.is_empty() {
        return arg("input vectors must have dimension >= 1");
    }
    Ok(())
}

/// Evaluates the kernel on a pair of input vectors.
pub fn kernel_eval(cfg: &KernelConfig, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    Ok(cfg.eval_unchecked(x, y))
}

/// Kernel evaluations of `x` against every dictionary entry.
pub fn kernel_vector(cfg: &KernelConfig, dictionary: &[Vec<f64>], x: &[f64]) -> Result<DVector<f64>> {
    if dictionary.is_empty() {
        return arg("kernel_vector needs a non-empty dictionary");
    }
    for d in dictionary {
        check_dims(d, x)?;
    }
    Ok(DVector::from_iterator(dictionary.len(), dictionary.iter().map(|d| cfg.eval_unchecked(d, x))))
}

/// Cross-kernel matrix with entries `k(rows[i], cols[j])`.
pub fn cross_gram(cfg: &KernelConfig, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || cols.is_empty() {
        return arg("cross_gram needs non-empty point sets");
    }
    let d = rows[0].len();
    if d == 0 {
        return arg("input vectors must have dimension >= 1");
    }
    if rows.iter().chain(cols).any(|p| p.len() != d) {
        return arg("inconsistent input dimensions");
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| cfg.eval_unchecked(&rows[i], &cols[j])))
}

/// A symmetric kernel matrix together with the points it was built from.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    dictionary: Vec<Vec<f64>>,
    kernel: KernelConfig,
}

impl GramMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dictionary(&self) -> &[Vec<f64>] {
        &self.dictionary
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.dictionary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dictionary.is_empty()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Vec<Vec<f64>>, KernelConfig) {
        (self.entries, self.dictionary, self.kernel)
    }
}

/// Assembles the Gram matrix of a dictionary. Only the upper triangle is
/// evaluated; the lower triangle is mirrored so the result is exactly symmetric.
pub fn gram_matrix(cfg: &KernelConfig, dictionary: &[Vec<f64>]) -> Result<GramMatrix> {
    let n = dictionary.len();
    if n == 0 {
        return arg("gram_matrix needs at least one point");
    }
    let d = dictionary[0].len();
    if d == 0 {
        return arg("input vectors must have dimension >= 1");
    }
    if dictionary.iter().any(|p| p.len() != d) {
        return arg("inconsistent input dimensions in dictionary");
    }
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = cfg.self_similarity(&dictionary[j]);
        for i in 0..j {
            let v = cfg.eval_unchecked(&dictionary[i], &dictionary[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix { entries: k, dictionary: dictionary.to_vec(), kernel: *cfg })
}
