//! Mackey-Glass series generation and the one-step-ahead regression datasets
//! built from it.
//!
//! The delay differential equation `dy/dt = beta y(t - tau) / (1 + y(t - tau)^n) - gamma y(t)`
//! is integrated with classical RK4 on a fine grid. Delayed values at grid
//! points are read from the stored history; the half-step values needed by the
//! middle RK4 stages use cubic Hermite interpolation between grid points (with
//! the stored derivatives), which keeps the scheme fourth order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{arg, numerical, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MackeyGlassConfig {
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub exponent: f64,
    pub sample_period: f64,
    pub y0: f64,
    pub internal_step: f64,
    pub length: usize,
}

impl Default for MackeyGlassConfig {
    fn default() -> Self {
        Self {
            beta: 0.2,
            gamma: 0.1,
            tau: 30.0,
            exponent: 10.0,
            sample_period: 6.0,
            y0: 0.9,
            internal_step: 0.1,
            length: 6000,
        }
    }
}

fn integral_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    ((r - n).abs() < 1e-9 * r.max(1.0) && n >= 1.0).then_some(n as usize)
}

impl MackeyGlassConfig {
    /// Fine-grid steps per emitted sample and per delay.
    fn grid(&self) -> Result<(usize, usize)> {
        if !(self.internal_step > 0.0 && self.sample_period > 0.0 && self.tau > 0.0) {
            return arg("step, sample period and delay must be positive");
        }
        let per_sample = integral_ratio(self.sample_period, self.internal_step)
            .ok_or_else(|| crate::Error::Argument("internal step must divide the sample period".into()))?;
        let lag = integral_ratio(self.tau, self.internal_step)
            .ok_or_else(|| crate::Error::Argument("internal step must divide the delay".into()))?;
        Ok((per_sample, lag))
    }

    /// Right-hand side of the delay equation.
    pub fn derivative(&self, y: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.powf(self.exponent)) - self.gamma * y
    }
}

/// Samples `y(k * sample_period)` for `k = 0..length`, with constant history
/// `y = y0` for `t <= 0`.
pub fn generate_mg(cfg: &MackeyGlassConfig) -> Result<Vec<f64>> {
    let (per_sample, lag) = cfg.grid()?;
    let h = cfg.internal_step;
    let steps = cfg.length.saturating_sub(1) * per_sample;
    let mut y = Vec::with_capacity(steps + 1);
    let mut dy = Vec::with_capacity(steps + 1);
    y.push(cfg.y0);
    // history value and derivative at fine-grid index i (possibly negative)
    let value = |y: &[f64], i: isize| if i >= 0 { y[i as usize] } else { cfg.y0 };
    let slope = |dy: &[f64], i: isize| if i >= 0 { dy[i as usize] } else { 0.0 };
    for i in 0..steps {
        let j = i as isize - lag as isize;
        let (a, b) = (value(&y, j), value(&y, j + 1));
        let yi = y[i];
        let k1 = cfg.derivative(yi, a);
        dy.push(k1);
        // one-sided derivatives at the breakpoint t = 0: the history is flat
        let da = slope(&dy, j);
        let db = if j >= 0 { slope(&dy, j + 1) } else { 0.0 };
        let mid = 0.5 * (a + b) + h * (da - db) / 8.0;
        let k2 = cfg.derivative(yi + 0.5 * h * k1, mid);
        let k3 = cfg.derivative(yi + 0.5 * h * k2, mid);
        let k4 = cfg.derivative(yi + h * k3, b);
        let next = yi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return numerical(format!("Mackey-Glass integration diverged at t = {}", (i + 1) as f64 * h));
        }
        y.push(next);
    }
    Ok(y.into_iter().step_by(per_sample).take(cfg.length).collect())
}

/// Adds i.i.d. `N(0, sigma^2)` noise drawn from a generator seeded with `seed`.
pub fn add_noise(series: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    add_noise_with(series, sigma, &mut rng)
}

pub fn add_noise_with(series: &[f64], sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return arg(format!("noise level must be nonnegative, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(series.to_vec());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| crate::Error::Argument(e.to_string()))?;
    Ok(series.iter().map(|v| v + normal.sample(rng)).collect())
}

/// Parameters of [`standardize`]: `z = (y - mean) / std / max_abs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
    pub max_abs: f64,
}

impl Standardization {
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.std / self.max_abs
    }
}

/// Zero mean, unit population standard deviation, then scaled into `[-1, 1]`.
pub fn standardize(series: &[f64]) -> Result<(Vec<f64>, Standardization)> {
    if series.is_empty() {
        return arg("cannot standardize an empty series");
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let std = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std.is_nan() || std <= 0.0 {
        return arg("cannot standardize a constant series");
    }
    let z: Vec<f64> = series.iter().map(|v| (v - mean) / std).collect();
    let max_abs = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let params = Standardization { mean, std, max_abs };
    Ok((z.into_iter().map(|v| v / max_abs).collect(), params))
}

/// Delay-embedded inputs `[u_i, ..., u_{i+d-1}]` and targets `u_{i+d}`.
pub fn embed_series(series: &[f64], d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if d == 0 || series.len() <= d {
        return (Vec::new(), Vec::new());
    }
    let count = series.len() - d;
    let inputs = (0..count).map(|i| series[i..i + d].to_vec()).collect();
    let targets = series[d..].to_vec();
    (inputs, targets)
}

/// Consecutive train and test windows of one-step-ahead pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub train_inputs: Vec<Vec<f64>>,
    pub train_targets: Vec<f64>,
    pub test_inputs: Vec<Vec<f64>>,
    pub test_targets: Vec<f64>,
    pub embedding: usize,
    /// Index of the first training pair.
    pub start: usize,
}

/// Window sizes for [`make_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub embedding: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub gap: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { embedding: 7, train_len: 2000, test_len: 200, gap: 200 }
    }
}

impl SplitSpec {
    /// Number of valid start positions in a series of `len` samples.
    pub fn valid_starts(&self, len: usize) -> usize {
        let pairs = len.saturating_sub(self.embedding);
        let need = self.train_len + self.gap + self.test_len;
        (pairs + 1).saturating_sub(need)
    }
}

/// Splits `series` into train pairs `[start, start + train_len)` and test pairs
/// `[start + train_len + gap, ... + test_len)`. Without an explicit `start`, one
/// is drawn uniformly over the valid starts from `rng`.
pub fn make_dataset(
    series: &[f64],
    split: SplitSpec,
    start: Option<usize>,
    rng: &mut impl Rng,
) -> Result<RegressionDataset> {
    if split.embedding == 0 {
        return arg("embedding dimension must be positive");
    }
    let starts = split.valid_starts(series.len());
    if starts == 0 {
        return arg(format!(
            "series of length {} is too short for embedding {} with {} train, {} gap and {} test pairs",
            series.len(),
            split.embedding,
            split.train_len,
            split.gap,
            split.test_len
        ));
    }
    let start = match start {
        Some(s) if s < starts => s,
        Some(s) => return arg(format!("start {s} leaves too few samples (valid starts are 0..{starts})")),
        None => rng.random_range(0..starts),
    };
    let (inputs, targets) = embed_series(series, split.embedding);
    let test_start = start + split.train_len + split.gap;
    let test_end = test_start + split.test_len;
    Ok(RegressionDataset {
        train_inputs: inputs[start..start + split.train_len].to_vec(),
        train_targets: targets[start..start + split.train_len].to_vec(),
        test_inputs: inputs[test_start..test_end].to_vec(),
        test_targets: targets[test_start..test_end].to_vec(),
        embedding: split.embedding,
        start,
    })
}

/// Formats with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a one-column CSV with header `value`.
pub fn write_series_csv(mut w: impl Write, series: &[f64]) -> std::io::Result<()> {
    writeln!(w, "value")?;
    for v in series {
        writeln!(w, "{}", format_f64(*v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equilibrium_is_constant() {
        let cfg = MackeyGlassConfig { y0: 1.0, length: 50, ..Default::default() };
        for v in generate_mg(&cfg).unwrap() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_derivative() {
        let cfg = MackeyGlassConfig::default();
        let d = cfg.derivative(0.9, 0.9);
        assert_relative_eq!(d, 0.2 * 0.9 / (1.0 + 0.9f64.powi(10)) - 0.09, epsilon = 1e-15);
        assert!((d - 0.043464).abs() < 5e-7);
    }

    #[test]
    fn step_halving_converges() {
        let coarse = MackeyGlassConfig { length: 100, ..Default::default() };
        let fine = MackeyGlassConfig { internal_step: 0.05, ..coarse };
        let a = generate_mg(&coarse).unwrap();
        let b = generate_mg(&fine).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "step halving changed samples by {diff}");
    }

    #[test]
    fn default_series_is_bounded() {
        let s = generate_mg(&MackeyGlassConfig { length: 3000, ..Default::default() }).unwrap();
        assert_eq!(s.len(), 3000);
        assert_eq!(s[0], 0.9);
        assert!(s.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 2.0));
        assert!(s[500..].iter().any(|v| *v < 0.6) && s[500..].iter().any(|v| *v > 1.1));
    }

    #[test]
    fn rejects_incommensurate_step() {
        let cfg = MackeyGlassConfig { internal_step: 0.07, ..Default::default() };
        assert!(generate_mg(&cfg).is_err());
    }

    #[test]
    fn noise_statistics() {
        let clean = vec![0.5; 100_000];
        assert_eq!(add_noise(&clean, 0.0, 3).unwrap(), clean);
        let noisy = add_noise(&clean, 0.02, 3).unwrap();
        let n = clean.len() as f64;
        let diffs: Vec<f64> = noisy.iter().map(|v| v - 0.5).collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.02).abs() < 0.02 * 0.02);
        assert_ne!(noisy, add_noise(&clean, 0.02, 4).unwrap());
        assert_eq!(noisy, add_noise(&clean, 0.02, 3).unwrap());
        assert!(add_noise(&clean, -1.0, 3).is_err());
    }

    #[test]
    fn standardize_example() {
        let (z, p) = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.mean, 2.0);
        assert_relative_eq!(p.std, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(p.max_abs, 1.224_744_871_391_589, epsilon = 1e-12);
        assert_relative_eq!(z[0], -1.0, epsilon = 1e-15);
        assert_eq!(z[1], 0.0);
        assert_relative_eq!(z[2], 1.0, epsilon = 1e-15);
        assert!(standardize(&[2.0, 2.0]).is_err());
    }

    #[test]
    fn standardize_is_idempotent_and_hits_unit_bound() {
        let s = generate_mg(&MackeyGlassConfig { length: 500, ..Default::default() }).unwrap();
        let (z, _) = standardize(&s).unwrap();
        assert_eq!(z.iter().fold(0.0f64, |m, v| m.max(v.abs())), 1.0);
        let (z2, _) = standardize(&z).unwrap();
        let (z3, _) = standardize(&z2).unwrap();
        for (a, b) in z2.iter().zip(&z3) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_alignment() {
        let (x, y) = embed_series(&[1.0, 2.0, 3.0], 1);
        assert_eq!(x, vec![vec![1.0], vec![2.0]]);
        assert_eq!(y, vec![2.0, 3.0]);
        let series: Vec<f64> = (0..50).map(|v| v as f64).collect();
        let (x, y) = embed_series(&series, 7);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(*yi, xi[6] + 1.0);
        }
    }

    #[test]
    fn default_split_sizes_and_determinism() {
        let series: Vec<f64> = (0..6000).map(|v| (v as f64 * 0.1).sin()).collect();
        let mut r1 = ChaCha20Rng::seed_from_u64(5);
        let mut r2 = ChaCha20Rng::seed_from_u64(5);
        let a = make_dataset(&series, SplitSpec::default(), None, &mut r1).unwrap();
        let b = make_dataset(&series, SplitSpec::default(), None, &mut r2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_inputs.len(), 2000);
        assert_eq!(a.test_inputs.len(), 200);
        let gap_pairs = (a.start + 2200) - (a.start + 2000);
        assert_eq!(gap_pairs, 200);
        assert_eq!(a.test_inputs[0][0], series[a.start + 2200]);
        assert!(make_dataset(&series[..2000], SplitSpec::default(), None, &mut r1).is_err());
        let last = SplitSpec::default().valid_starts(6000) - 1;
        let d = make_dataset(&series, SplitSpec::default(), Some(last), &mut r1).unwrap();
        assert_eq!(*d.test_targets.last().unwrap(), series[5999]);
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &[0.5, 1.0 / 3.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "value\n5.0000000000000000e-1\n3.3333333333333331e-1\n");
    }
}
