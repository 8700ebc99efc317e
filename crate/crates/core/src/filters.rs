//! Adaptive filters over explicit feature vectors (LMS, RLS, extended RLS) and
//! the naive kernel baselines (KLMS, QKLMS) whose dictionaries grow with the stream.
//!
//! Every step predicts with the current weights first, then updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, numerical, Result};
use crate::kernel::{squared_distance, KernelConfig};

/// Prediction made before the update and the resulting error `y - prediction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub prediction: f64,
    pub error: f64,
}

/// A filter whose prediction is linear in a fixed-dimension feature vector.
pub trait LinearFilter: Send {
    fn weights(&self) -> &DVector<f64>;

    fn predict(&self, phi: &DVector<f64>) -> f64 {
        self.weights().dot(phi)
    }

    fn step(&mut self, phi: &DVector<f64>, y: f64) -> Result<StepOutput>;
}

fn check_step(dim: usize, phi: &DVector<f64>, y: f64) -> Result<()> {
    if phi.len() != dim {
        return arg(format!("feature vector has length {}, filter has dimension {dim}", phi.len()));
    }
    if !y.is_finite() || phi.iter().any(|v| !v.is_finite()) {
        return numerical("non-finite filter input");
    }
    Ok(())
}

/// Least mean squares: `w <- w + eta * e * phi`.
#[derive(Debug, Clone)]
pub struct LmsState {
    weights: DVector<f64>,
    eta: f64,
}

impl LmsState {
    pub fn new(dim: usize, eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return arg(format!("learning rate must be finite and nonnegative, got {eta}"));
        }
        Ok(Self { weights: DVector::zeros(dim), eta })
    }

    pub fn with_weights(weights: DVector<f64>, eta: f64) -> Result<Self> {
        let mut s = Self::new(weights.len(), eta)?;
        s.weights = weights;
        Ok(s)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn weights_mut(&mut self) -> &mut DVector<f64> {
        &mut self.weights
    }
}

impl LinearFilter for LmsState {
    fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    fn step(&mut self, phi: &DVector<f64>, y: f64) -> Result<StepOutput> {
        check_step(self.weights.len(), phi, y)?;
        let prediction = self.weights.dot(phi);
        let error = y - prediction;
        self.weights.axpy(self.eta * error, phi, 1.0);
        if self.weights.iter().any(|v| !v.is_finite()) {
            return numerical("LMS weights diverged");
        }
        Ok(StepOutput { prediction, error })
    }
}

/// Exponentially weighted recursive least squares with `P_0 = delta * I`.
#[derive(Debug, Clone)]
pub struct RlsState {
    weights: DVector<f64>,
    p: DMatrix<f64>,
    lambda: f64,
    delta: f64,
}

fn check_rls_params(lambda: f64, delta: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return arg(format!("forgetting factor must lie in (0, 1], got {lambda}"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return arg(format!("initial covariance scale must be positive, got {delta}"));
    }
    Ok(())
}

/// Gain `P phi / (lambda + phi^T P phi)` and the updated
/// `(P - gain (P phi)^T) / lambda` (not yet symmetrized).
fn rls_core(p: &DMatrix<f64>, phi: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p_phi = p * phi;
    let denom = lambda + phi.dot(&p_phi);
    if !(denom > 0.0 && denom.is_finite()) {
        return numerical(format!("RLS denominator lambda + phi'P phi = {denom} is not positive"));
    }
    let gain = &p_phi / denom;
    let mut next = p.clone();
    next.ger(-1.0, &gain, &p_phi, 1.0);
    next /= lambda;
    Ok((gain, next))
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

impl RlsState {
    pub fn new(dim: usize, lambda: f64, delta: f64) -> Result<Self> {
        check_rls_params(lambda, delta)?;
        Ok(Self { weights: DVector::zeros(dim), p: DMatrix::identity(dim, dim) * delta, lambda, delta })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl LinearFilter for RlsState {
    fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    fn step(&mut self, phi: &DVector<f64>, y: f64) -> Result<StepOutput> {
        check_step(self.weights.len(), phi, y)?;
        let prediction = self.weights.dot(phi);
        let error = y - prediction;
        let (gain, mut p) = rls_core(&self.p, phi, self.lambda)?;
        symmetrize(&mut p);
        self.p = p;
        self.weights.axpy(error, &gain, 1.0);
        Ok(StepOutput { prediction, error })
    }
}

/// Extended RLS with state transition `A` and process noise `q`:
/// `w <- A w + A k e`, `P <- A (P - k (P phi)^T) A^T / lambda + lambda q I`,
/// where `k = P phi / (lambda + phi^T P phi)`.
#[derive(Debug, Clone)]
pub struct ExRlsState {
    weights: DVector<f64>,
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    lambda: f64,
    q: f64,
}

impl ExRlsState {
    pub fn new(a: DMatrix<f64>, lambda: f64, delta: f64, q: f64) -> Result<Self> {
        check_rls_params(lambda, delta)?;
        let dim = a.nrows();
        if a.ncols() != dim {
            return arg("state transition matrix must be square");
        }
        if !(q >= 0.0 && q.is_finite()) {
            return arg(format!("process noise must be nonnegative, got {q}"));
        }
        Ok(Self { weights: DVector::zeros(dim), p: DMatrix::identity(dim, dim) * delta, a, lambda, q })
    }

    /// `A = alpha * I`.
    pub fn scaled_identity(dim: usize, alpha: f64, lambda: f64, delta: f64, q: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * alpha, lambda, delta, q)
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
}

impl LinearFilter for ExRlsState {
    fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    fn step(&mut self, phi: &DVector<f64>, y: f64) -> Result<StepOutput> {
        check_step(self.weights.len(), phi, y)?;
        let prediction = self.weights.dot(phi);
        let error = y - prediction;
        let (k, inner) = rls_core(&self.p, phi, self.lambda)?;
        let gain = &self.a * k;
        let mut p = &self.a * inner * self.a.transpose();
        if self.q > 0.0 {
            let bump = self.lambda * self.q;
            for i in 0..p.nrows() {
                p[(i, i)] += bump;
            }
        }
        symmetrize(&mut p);
        self.p = p;
        self.weights = &self.a * &self.weights;
        self.weights.axpy(error, &gain, 1.0);
        Ok(StepOutput { prediction, error })
    }
}

/// Kernel LMS with an optional quantization radius (QKLMS).
///
/// A new sample whose squared distance to the nearest center is below
/// `q_factor` updates that center's coefficient (lowest index on ties);
/// otherwise it becomes a new center. `q_factor = 0` is plain KLMS.
#[derive(Debug, Clone)]
pub struct KernelFilterState {
    centers: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    eta: f64,
    q_factor: f64,
    kernel: KernelConfig,
}

impl KernelFilterState {
    pub fn klms(kernel: KernelConfig, eta: f64) -> Result<Self> {
        Self::qklms(kernel, eta, 0.0)
    }

    pub fn qklms(kernel: KernelConfig, eta: f64, q_factor: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return arg(format!("learning rate must be finite and nonnegative, got {eta}"));
        }
        if q_factor.is_nan() || q_factor < 0.0 {
            return arg(format!("quantization factor must be nonnegative, got {q_factor}"));
        }
        Ok(Self { centers: Vec::new(), coefficients: Vec::new(), eta, q_factor, kernel })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if let Some(c) = self.centers.first() {
            if c.len() != x.len() {
                return arg(format!("input has dimension {}, centers have {}", x.len(), c.len()));
            }
        }
        Ok(self.centers.iter().zip(&self.coefficients).map(|(c, a)| a * self.kernel.eval_unchecked(c, x)).sum())
    }

    pub fn step(&mut self, x: &[f64], y: f64) -> Result<StepOutput> {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return numerical("non-finite filter input");
        }
        let prediction = self.predict(x)?;
        let error = y - prediction;
        let update = self.eta * error;
        let mut nearest: Option<(usize, f64)> = None;
        if self.q_factor > 0.0 {
            for (i, c) in self.centers.iter().enumerate() {
                let d = squared_distance(c, x);
                if nearest.is_none_or(|(_, b)| d < b) {
                    nearest = Some((i, d));
                }
            }
        }
        match nearest {
            Some((i, d)) if d < self.q_factor => self.coefficients[i] += update,
            _ => {
                self.centers.push(x.to_vec());
                self.coefficients.push(update);
            }
        }
        Ok(StepOutput { prediction, error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rvec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn lms_first_step_and_zero_rate() {
        let phi = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let mut f = LmsState::new(3, 0.1).unwrap();
        let out = f.step(&phi, 2.0).unwrap();
        assert_eq!(out, StepOutput { prediction: 0.0, error: 2.0 });
        assert_eq!(f.weights(), &(&phi * 0.2));
        let mut g = LmsState::with_weights(DVector::from_vec(vec![1.0, 2.0, 3.0]), 0.0).unwrap();
        g.step(&phi, 5.0).unwrap();
        assert_eq!(g.weights().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(f.step(&phi, f64::NAN).is_err());
        assert!(f.step(&DVector::zeros(2), 1.0).is_err());
        assert!(LmsState::new(3, -0.1).is_err());
    }

    #[test]
    fn lms_converges_on_linear_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let target = rvec(&mut rng, 4);
        let mut f = LmsState::new(4, 0.1).unwrap();
        let mut last = 0.0;
        for _ in 0..10_000 {
            let phi = rvec(&mut rng, 4);
            last = f.step(&phi, target.dot(&phi)).unwrap().error.abs();
        }
        assert!(last < 1e-8);
        assert!((f.weights() - target).amax() < 1e-8);
    }

    #[test]
    fn repeated_sample_error_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let phi = rvec(&mut rng, 5);
        let mut lms = LmsState::new(5, 0.3).unwrap();
        let mut rls = RlsState::new(5, 0.99, 10.0).unwrap();
        let a = lms.step(&phi, 1.3).unwrap().error.abs();
        let b = lms.step(&phi, 1.3).unwrap().error.abs();
        assert!(b < a);
        let a = rls.step(&phi, 1.3).unwrap().error.abs();
        let b = rls.step(&phi, 1.3).unwrap().error.abs();
        assert!(b < a);
    }

    #[test]
    fn rls_first_gain() {
        let phi = DVector::from_vec(vec![1.0, 2.0]);
        let mut f = RlsState::new(2, 0.9, 4.0).unwrap();
        f.step(&phi, 1.0).unwrap();
        // g = delta phi / (lambda + delta |phi|^2), w = g * y
        let g = &phi * (4.0 / (0.9 + 4.0 * 5.0));
        assert!((f.weights() - g).amax() < 1e-15);
    }

    #[test]
    fn rls_matches_ridge_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let dim = 6;
        let delta = 1e4;
        let mut f = RlsState::new(dim, 1.0, delta).unwrap();
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for step in 1..=1000 {
            let phi = rvec(&mut rng, dim);
            let y = (phi[0] * 3.0).sin() + 0.1 * rng.random_range(-1.0..1.0);
            f.step(&phi, y).unwrap();
            rows.push(phi);
            ys.push(y);
            if [10, 100, 1000].contains(&step) {
                let x = DMatrix::from_columns(&rows);
                let yv = DVector::from_column_slice(&ys);
                let a = &x * x.transpose() + DMatrix::identity(dim, dim) / delta;
                let w = a.lu().solve(&(&x * yv)).unwrap();
                let rel = (f.weights() - &w).norm() / w.norm();
                assert!(rel < 1e-5, "step {step}: relative error {rel}");
                assert!((f.p() - f.p().transpose()).amax() == 0.0);
            }
        }
    }

    #[test]
    fn rls_stays_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut f = RlsState::new(8, 0.995, 100.0).unwrap();
        for _ in 0..2000 {
            let phi = rvec(&mut rng, 8);
            f.step(&phi, phi.sum()).unwrap();
        }
        assert!((f.p() - f.p().transpose()).amax() < 1e-8);
        assert!(RlsState::new(2, 1.5, 1.0).is_err());
        assert!(RlsState::new(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn exrls_reduces_to_rls() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let mut rls = RlsState::new(5, 0.98, 50.0).unwrap();
        let mut ex = ExRlsState::scaled_identity(5, 1.0, 0.98, 50.0, 0.0).unwrap();
        for _ in 0..500 {
            let phi = rvec(&mut rng, 5);
            let y = phi[1] - 0.5 * phi[3];
            let a = rls.step(&phi, y).unwrap();
            let b = ex.step(&phi, y).unwrap();
            assert_eq!(a, b);
            assert_eq!(rls.weights(), ex.weights());
        }
        assert_eq!(rls.p(), ex.p());
    }

    #[test]
    fn exrls_tracks_drift_better() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let dim = 4;
        let mut target = rvec(&mut rng, dim) * 5.0;
        let mut rls = RlsState::new(dim, 1.0, 100.0).unwrap();
        let mut ex = ExRlsState::scaled_identity(dim, 0.99, 1.0, 100.0, 1e-3).unwrap();
        let (mut e_rls, mut e_ex) = (0.0, 0.0);
        for step in 0..2000 {
            let phi = rvec(&mut rng, dim);
            let y = target.dot(&phi);
            let a = rls.step(&phi, y).unwrap().error;
            let b = ex.step(&phi, y).unwrap().error;
            if step >= 200 {
                e_rls += a * a;
                e_ex += b * b;
            }
            target = &target * 0.99 + rvec(&mut rng, dim) * 0.01;
        }
        assert!(e_ex < e_rls, "ex {e_ex} rls {e_rls}");
    }

    #[test]
    fn exrls_process_noise_bounds_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let (lambda, q) = (0.97, 0.01);
        let a = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.9 } else { 0.05 * (i as f64 - j as f64) });
        let mut ex = ExRlsState::new(a, lambda, 10.0, q).unwrap();
        for _ in 0..300 {
            let phi = rvec(&mut rng, 4);
            ex.step(&phi, phi[0]).unwrap();
            let min = ex.p().clone().symmetric_eigenvalues().min();
            assert!(min >= lambda * q - 1e-12);
        }
    }

    #[test]
    fn klms_basics() {
        let k = KernelConfig::gaussian(1.0).unwrap();
        let mut f = KernelFilterState::klms(k, 0.5).unwrap();
        let out = f.step(&[0.2, 0.1], 2.0).unwrap();
        assert_eq!(out, StepOutput { prediction: 0.0, error: 2.0 });
        assert_eq!(f.coefficients(), &[1.0]);
        for i in 0..9 {
            f.step(&[i as f64 * 0.1, 0.0], 1.0).unwrap();
        }
        assert_eq!(f.centers().len(), 10);
    }

    #[test]
    fn qklms_zero_radius_is_klms_and_merges_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let k = KernelConfig::gaussian(0.7).unwrap();
        let mut a = KernelFilterState::klms(k, 0.2).unwrap();
        let mut b = KernelFilterState::qklms(k, 0.2, 0.0).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = x[0] * x[1];
            assert_eq!(a.step(&x, y).unwrap(), b.step(&x, y).unwrap());
        }
        let mut q = KernelFilterState::qklms(k, 0.2, 0.06).unwrap();
        for _ in 0..20 {
            q.step(&[0.3, 0.3], 1.0).unwrap();
        }
        assert_eq!(q.centers().len(), 1);
        assert!((q.predict(&[0.3, 0.3]).unwrap() - (1.0 - 0.8f64.powi(20))).abs() < 1e-12);
    }

    #[test]
    fn qklms_ties_go_to_lowest_index() {
        let k = KernelConfig::gaussian(1.0).unwrap();
        let mut q = KernelFilterState::qklms(k, 1.0, 0.5).unwrap();
        q.step(&[-0.5], 1.0).unwrap();
        q.step(&[0.5], 1.0).unwrap();
        assert_eq!(q.centers().len(), 2);
        let before = q.coefficients().to_vec();
        q.step(&[0.0], 0.0).unwrap();
        assert_eq!(q.centers().len(), 2);
        assert_ne!(q.coefficients()[0], before[0]);
        assert_eq!(q.coefficients()[1], before[1]);
    }
}
