//! Explicit finite-dimensional feature maps approximating the Gaussian kernel.
//!
//! All maps satisfy `z(x) . z(y) ~ k(x, y)`:
//!
//! * [`RffCosSin`]: random Fourier frequencies `w ~ N(0, I / sigma^2)`, features
//!   `sqrt(2/D) [cos(w.x), sin(w.x)]` in pairs.
//! * [`RffPhase`]: `sqrt(2/D) cos(w.x + b)` with `b ~ U[0, 2 pi)`.
//! * [`TaylorMap`]: truncated Taylor expansion of `exp(x.y / sigma^2)`.
//! * [`QuadratureMap`]: a deterministic sub-sampled tensor Gauss-Hermite rule
//!   for the Fourier integral of the kernel.
//! * [`Eigenmap`]: the kernel eigenfunction map of [`crate::spectral`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{arg, Result};
use crate::kernel::KernelConfig;
use crate::spectral::{embed, Eigenmap};

/// A map from input vectors to explicit feature vectors.
pub trait FeatureMap: Send + Sync {
    /// Feature dimension `D`.
    fn dim(&self) -> usize;

    fn features(&self, x: &[f64]) -> Result<DVector<f64>>;

    /// Row `i` holds the features of `points[i]`.
    fn features_many(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(points.len(), self.dim());
        for (i, p) in points.iter().enumerate() {
            out.set_row(i, &self.features(p)?.transpose());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Rff1,
    Rff2,
    Taylor,
    Gq,
    Speed,
}

impl std::str::FromStr for FeatureKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rff1" => Ok(Self::Rff1),
            "rff2" => Ok(Self::Rff2),
            "taylor" | "ts" => Ok(Self::Taylor),
            "gq" => Ok(Self::Gq),
            "speed" => Ok(Self::Speed),
            _ => arg(format!("unknown feature kind '{s}'")),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rff1 => "rff1",
            Self::Rff2 => "rff2",
            Self::Taylor => "taylor",
            Self::Gq => "gq",
            Self::Speed => "speed",
        })
    }
}

/// Parameters of an explicit feature map. `degree` is the Taylor order or the
/// polynomial exactness degree of the quadrature rule; `seed` drives the random kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMapSpec {
    pub kind: FeatureKind,
    pub dimension: usize,
    pub kernel: KernelConfig,
    pub seed: u64,
    pub degree: usize,
}

impl FeatureMapSpec {
    /// Builds a data-independent map for `input_dim`-dimensional inputs.
    /// `Speed` maps depend on training data; build them with
    /// [`crate::spectral::eigenmap_from_points`] instead.
    pub fn build(&self, input_dim: usize) -> Result<Box<dyn FeatureMap>> {
        Ok(match self.kind {
            FeatureKind::Rff1 => Box::new(RffCosSin::new(self, input_dim)?),
            FeatureKind::Rff2 => Box::new(RffPhase::new(self, input_dim)?),
            FeatureKind::Taylor => Box::new(TaylorMap::new(self, input_dim)?),
            FeatureKind::Gq => Box::new(QuadratureMap::new(self, input_dim)?),
            FeatureKind::Speed => return arg("speed features are built from training data, not from a spec alone"),
        })
    }
}

fn check_input(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return arg(format!("input has dimension {}, map expects {expected}", x.len()));
    }
    Ok(())
}

fn gaussian_frequencies(rng: &mut impl Rng, rows: usize, d: usize, sigma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, d, |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        s / sigma
    })
}

/// Random Fourier features as sine-cosine pairs.
#[derive(Debug, Clone)]
pub struct RffCosSin {
    freqs: DMatrix<f64>,
    scale: f64,
}

impl RffCosSin {
    pub fn new(spec: &FeatureMapSpec, input_dim: usize) -> Result<Self> {
        let dim = spec.dimension;
        if dim == 0 || !dim.is_multiple_of(2) {
            return arg(format!("sine-cosine features need a positive even dimension, got {dim}"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        let freqs = gaussian_frequencies(&mut rng, dim / 2, input_dim, spec.kernel.bandwidth());
        Ok(Self { freqs, scale: (2.0 / dim as f64).sqrt() })
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.freqs
    }
}

impl FeatureMap for RffCosSin {
    fn dim(&self) -> usize {
        2 * self.freqs.nrows()
    }

    fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_input(self.freqs.ncols(), x)?;
        let proj = &self.freqs * DVector::from_column_slice(x);
        let mut z = DVector::zeros(self.dim());
        for (i, p) in proj.iter().enumerate() {
            let (s, c) = p.sin_cos();
            z[2 * i] = self.scale * c;
            z[2 * i + 1] = self.scale * s;
        }
        Ok(z)
    }
}

/// Random Fourier features `cos(w.x + b)` with random phase.
#[derive(Debug, Clone)]
pub struct RffPhase {
    freqs: DMatrix<f64>,
    phases: DVector<f64>,
    scale: f64,
}

impl RffPhase {
    pub fn new(spec: &FeatureMapSpec, input_dim: usize) -> Result<Self> {
        let dim = spec.dimension;
        if dim == 0 {
            return arg("feature dimension must be positive");
        }
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        let freqs = gaussian_frequencies(&mut rng, dim, input_dim, spec.kernel.bandwidth());
        let uni = Uniform::new(0.0, 2.0 * PI).expect("valid range");
        let phases = DVector::from_fn(dim, |_, _| uni.sample(&mut rng));
        Ok(Self::from_parts(freqs, phases))
    }

    /// A map with explicit frequencies (rows) and phases.
    pub fn from_parts(freqs: DMatrix<f64>, phases: DVector<f64>) -> Self {
        let scale = (2.0 / freqs.nrows() as f64).sqrt();
        Self { freqs, phases, scale }
    }
}

impl FeatureMap for RffPhase {
    fn dim(&self) -> usize {
        self.freqs.nrows()
    }

    fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_input(self.freqs.ncols(), x)?;
        let proj = &self.freqs * DVector::from_column_slice(x) + &self.phases;
        Ok(proj.map(|p| self.scale * p.cos()))
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Taylor features: for every multi-index `a` with `|a| <= r`,
/// `exp(-|x|^2 / (2 sigma^2)) x^a / sqrt(sigma^{2|a|} prod_i a_i!)`.
#[derive(Debug, Clone)]
pub struct TaylorMap {
    sigma: f64,
    input_dim: usize,
    indices: Vec<Vec<u32>>,
    coeffs: Vec<f64>,
}

impl TaylorMap {
    pub fn new(spec: &FeatureMapSpec, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return arg("input dimension must be positive");
        }
        let expected = binomial(input_dim + spec.degree, spec.degree);
        if spec.dimension != expected {
            return arg(format!(
                "degree-{} Taylor features in {input_dim} dimensions have dimension {expected}, requested {}",
                spec.degree, spec.dimension
            ));
        }
        let sigma = spec.kernel.bandwidth();
        let mut indices = Vec::with_capacity(expected);
        for total in 0..=spec.degree {
            let mut current = vec![0u32; input_dim];
            compositions(total as u32, 0, &mut current, &mut indices);
        }
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        let coeffs = indices
            .iter()
            .map(|a| {
                let total: u32 = a.iter().sum();
                let denom = sigma.powi(2 * total as i32) * a.iter().map(|&k| fact(k)).product::<f64>();
                1.0 / denom.sqrt()
            })
            .collect();
        Ok(Self { sigma, input_dim, indices, coeffs })
    }

    pub fn multi_indices(&self) -> &[Vec<u32>] {
        &self.indices
    }
}

/// Appends all multi-indices with the given total, lexicographically descending
/// in the leading coordinate.
fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}

impl FeatureMap for TaylorMap {
    fn dim(&self) -> usize {
        self.indices.len()
    }

    fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_input(self.input_dim, x)?;
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let envelope = (-sq / (2.0 * self.sigma * self.sigma)).exp();
        Ok(DVector::from_iterator(
            self.indices.len(),
            self.indices.iter().zip(&self.coeffs).map(|(a, c)| {
                let mono: f64 = a.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product();
                envelope * c * mono
            }),
        ))
    }
}

/// Nodes and normalized weights of the `n`-point Gauss-Hermite rule for the
/// standard normal density, ascending. Supports `n` in `1..=5`.
pub fn gauss_hermite_normal(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    // roots of the probabilists' Hermite polynomials He_n
    let nodes: Vec<f64> = match n {
        1 => vec![0.0],
        2 => vec![-1.0, 1.0],
        3 => vec![-(3f64.sqrt()), 0.0, 3f64.sqrt()],
        4 => {
            let (a, b) = ((3.0 - 6f64.sqrt()).sqrt(), (3.0 + 6f64.sqrt()).sqrt());
            vec![-b, -a, a, b]
        }
        5 => {
            let (a, b) = ((5.0 - 10f64.sqrt()).sqrt(), (5.0 + 10f64.sqrt()).sqrt());
            vec![-b, -a, 0.0, a, b]
        }
        _ => return arg(format!("Gauss-Hermite rules are available for 1..=5 points, got {n}")),
    };
    // w_i = (n-1)! / (n He_{n-1}(x_i)^2), which sums to one
    let he = |k: usize, x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        if k == 0 {
            return p0;
        }
        for j in 1..k {
            let p2 = x * p1 - j as f64 * p0;
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    let fact: f64 = (1..n).map(|k| k as f64).product();
    let weights = nodes.iter().map(|&x| fact / (n as f64 * he(n - 1, x).powi(2))).collect();
    Ok((nodes, weights))
}

/// Quadrature features `sqrt(v_j) [cos(u_j.x), sin(u_j.x)]` from a sub-sampled
/// tensor-product Gauss-Hermite rule.
///
/// Construction: the full tensor grid is folded into `+-u` pairs (pair weight is
/// the sum of both nodes' weights), the `D/2` pairs of largest weight are kept
/// (ties broken by the lexicographic order of the node indices), their weights
/// are renormalized to sum to one, and the nodes are rescaled so the mean
/// second moment per coordinate is one again before dividing by `sigma`.
#[derive(Debug, Clone)]
pub struct QuadratureMap {
    nodes: DMatrix<f64>,
    sqrt_weights: DVector<f64>,
}

impl QuadratureMap {
    pub fn new(spec: &FeatureMapSpec, input_dim: usize) -> Result<Self> {
        let dim = spec.dimension;
        if dim == 0 || !dim.is_multiple_of(2) {
            return arg(format!("quadrature features need a positive even dimension, got {dim}"));
        }
        if input_dim == 0 {
            return arg("input dimension must be positive");
        }
        let points = spec.degree / 2 + 1;
        let (x1, w1) = gauss_hermite_normal(points)?;
        let total = (points as u64).checked_pow(input_dim as u32).filter(|&t| t <= 50_000_000);
        let Some(total) = total else {
            return arg(format!("tensor grid with {points}^{input_dim} nodes is too large"));
        };
        let pairs_available = total.div_ceil(2) as usize;
        let wanted = dim / 2;
        if wanted > pairs_available {
            return arg(format!("requested {wanted} node pairs but the rule has only {pairs_available}"));
        }
        // Enumerate one representative per +-pair: the index tuple that is
        // lexicographically <= its mirror (mirror index is points-1-i).
        let mut pairs: Vec<(f64, Vec<u8>)> = Vec::with_capacity(pairs_available);
        let mut idx = vec![0u8; input_dim];
        for _ in 0..total {
            let mirror: Vec<u8> = idx.iter().map(|&i| (points - 1) as u8 - i).collect();
            if idx <= mirror {
                let w: f64 = idx.iter().map(|&i| w1[i as usize]).product();
                pairs.push((if idx == mirror { w } else { 2.0 * w }, idx.clone()));
            }
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if (*slot as usize) < points {
                    break;
                }
                *slot = 0;
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        pairs.truncate(wanted);
        let wsum: f64 = pairs.iter().map(|p| p.0).sum();
        let mut nodes = DMatrix::from_fn(wanted, input_dim, |r, c| x1[pairs[r].1[c] as usize]);
        let weights = DVector::from_fn(wanted, |r, _| pairs[r].0 / wsum);
        let second_moment: f64 =
            (0..input_dim).map(|c| (0..wanted).map(|r| weights[r] * nodes[(r, c)].powi(2)).sum::<f64>()).sum::<f64>()
                / input_dim as f64;
        let scale = if second_moment > 0.0 { 1.0 / second_moment.sqrt() } else { 1.0 };
        nodes *= scale / spec.kernel.bandwidth();
        Ok(Self { nodes, sqrt_weights: weights.map(f64::sqrt) })
    }

    /// Node matrix (one frequency per row, already divided by `sigma`).
    pub fn nodes(&self) -> &DMatrix<f64> {
        &self.nodes
    }

    pub fn weights(&self) -> DVector<f64> {
        self.sqrt_weights.map(|s| s * s)
    }
}

impl FeatureMap for QuadratureMap {
    fn dim(&self) -> usize {
        2 * self.nodes.nrows()
    }

    fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_input(self.nodes.ncols(), x)?;
        let proj = &self.nodes * DVector::from_column_slice(x);
        let mut z = DVector::zeros(self.dim());
        for (i, p) in proj.iter().enumerate() {
            let (s, c) = p.sin_cos();
            z[2 * i] = self.sqrt_weights[i] * c;
            z[2 * i + 1] = self.sqrt_weights[i] * s;
        }
        Ok(z)
    }
}

impl FeatureMap for Eigenmap {
    fn dim(&self) -> usize {
        Eigenmap::dim(self)
    }

    fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        embed(self, x)
    }

    fn features_many(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.embed_many(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_eval;
    use crate::spectral::eigenmap_from_points;
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: FeatureKind, dimension: usize, sigma: f64, seed: u64, degree: usize) -> FeatureMapSpec {
        FeatureMapSpec { kind, dimension, kernel: KernelConfig::gaussian(sigma).unwrap(), seed, degree }
    }

    fn random_pairs(rng: &mut impl Rng, count: usize, d: usize, radius: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut draw = || (0..d).map(|_| rng.random_range(-radius..radius)).collect::<Vec<f64>>();
        (0..count).map(|_| (draw(), draw())).collect()
    }

    #[test]
    fn rff1_at_origin_and_unit_norm() {
        let map = RffCosSin::new(&spec(FeatureKind::Rff1, 8, 1.0, 1, 0), 3).unwrap();
        let z = map.features(&[0.0; 3]).unwrap();
        let a = 0.5;
        assert_eq!(z.as_slice(), &[a, 0.0, a, 0.0, a, 0.0, a, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!((map.features(&x).unwrap().norm_squared() - 1.0).abs() < 1e-12);
        }
        assert!(RffCosSin::new(&spec(FeatureKind::Rff1, 7, 1.0, 1, 0), 3).is_err());
    }

    #[test]
    fn rff2_single_feature() {
        let map = RffPhase::from_parts(DMatrix::zeros(1, 2), DVector::zeros(1));
        let z = map.features(&[0.4, -1.0]).unwrap();
        assert!((z[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn random_features_are_deterministic_per_seed() {
        for kind in [FeatureKind::Rff1, FeatureKind::Rff2] {
            let a = spec(kind, 10, 1.0, 9, 0).build(2).unwrap();
            let b = spec(kind, 10, 1.0, 9, 0).build(2).unwrap();
            let c = spec(kind, 10, 1.0, 10, 0).build(2).unwrap();
            let x = [0.3, -0.7];
            assert_eq!(a.features(&x).unwrap(), b.features(&x).unwrap());
            assert_ne!(a.features(&x).unwrap(), c.features(&x).unwrap());
        }
    }

    #[test]
    fn random_features_are_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kernel = KernelConfig::gaussian(1.0).unwrap();
        let pairs = random_pairs(&mut rng, 5, 3, 0.8);
        for kind in [FeatureKind::Rff1, FeatureKind::Rff2] {
            let maps: Vec<_> = (0..50).map(|s| spec(kind, 4000, 1.0, s, 0).build(3).unwrap()).collect();
            for (x, y) in &pairs {
                let mean = maps.iter().map(|m| m.features(x).unwrap().dot(&m.features(y).unwrap())).sum::<f64>() / 50.0;
                assert!((mean - kernel_eval(&kernel, x, y).unwrap()).abs() < 0.02, "{kind}");
            }
        }
    }

    fn estimate_std(kind: FeatureKind, dim: usize, x: &[f64], y: &[f64], seeds: u64) -> f64 {
        let est: Vec<f64> = (0..seeds)
            .map(|s| {
                let m = spec(kind, dim, 1.0, 1000 + s, 0).build(x.len()).unwrap();
                m.features(x).unwrap().dot(&m.features(y).unwrap())
            })
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
    }

    #[test]
    fn phase_features_have_higher_variance() {
        let (x, y) = (vec![0.2, -0.4, 0.1], vec![-0.3, 0.5, 0.0]);
        let s1 = estimate_std(FeatureKind::Rff1, 100, &x, &y, 400);
        let s2 = estimate_std(FeatureKind::Rff2, 100, &x, &y, 400);
        assert!(s2 > s1, "rff2 std {s2} vs rff1 {s1}");
    }

    #[test]
    fn estimates_concentrate_like_inverse_sqrt_dimension() {
        let (x, y) = (vec![0.2, -0.4, 0.1], vec![-0.3, 0.5, 0.0]);
        let s: Vec<f64> = [100, 400, 1600].iter().map(|&d| estimate_std(FeatureKind::Rff1, d, &x, &y, 200)).collect();
        for w in s.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.5..2.7).contains(&ratio), "std ratio {ratio} for 4x dimension");
        }
    }

    #[test]
    fn taylor_dimension_and_origin() {
        assert_eq!(binomial(11, 4), 330);
        let map = TaylorMap::new(&spec(FeatureKind::Taylor, 330, 1.0, 0, 4), 7).unwrap();
        assert_eq!(map.dim(), 330);
        let z = map.features(&[0.0; 7]).unwrap();
        assert_eq!(z.dot(&z), 1.0);
        assert!(TaylorMap::new(&spec(FeatureKind::Taylor, 329, 1.0, 0, 4), 7).is_err());
    }

    #[test]
    fn taylor_matches_truncated_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for sigma in [0.7, 1.0, 1.6] {
            let map = TaylorMap::new(&spec(FeatureKind::Taylor, 84, sigma, 0, 3), 6).unwrap();
            for (x, y) in random_pairs(&mut rng, 50, 6, 1.0) {
                let dot = map.features(&x).unwrap().dot(&map.features(&y).unwrap());
                let s2 = sigma * sigma;
                let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                let nx: f64 = x.iter().map(|a| a * a).sum();
                let ny: f64 = y.iter().map(|a| a * a).sum();
                let mut series = 0.0;
                let mut term = 1.0;
                for j in 0..=3 {
                    if j > 0 {
                        term *= xy / (s2 * j as f64);
                    }
                    series += term;
                }
                let direct = (-nx / (2.0 * s2)).exp() * (-ny / (2.0 * s2)).exp() * series;
                assert!((dot - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn taylor_remainder_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let kernel = KernelConfig::gaussian(1.0).unwrap();
        let map = TaylorMap::new(&spec(FeatureKind::Taylor, 330, 1.0, 0, 4), 7).unwrap();
        let bound = std::f64::consts::E - (1.0 + 1.0 + 0.5 + 1.0 / 6.0 + 1.0 / 24.0);
        assert!(bound < 0.00996);
        let mut done = 0;
        while done < 1000 {
            let (x, y) = random_pairs(&mut rng, 1, 7, 1.0).pop().unwrap();
            let (nx, ny): (f64, f64) = (x.iter().map(|a| a * a).sum(), y.iter().map(|a| a * a).sum());
            if nx > 1.0 || ny > 1.0 {
                continue;
            }
            let dot = map.features(&x).unwrap().dot(&map.features(&y).unwrap());
            assert!((dot - kernel_eval(&kernel, &x, &y).unwrap()).abs() <= bound);
            done += 1;
        }
    }

    #[test]
    fn hermite_rules_integrate_normal_moments() {
        // E[u^k] for u ~ N(0,1): 0 for odd k, (k-1)!! for even k
        let moment = |k: usize| if k % 2 == 1 { 0.0 } else { (1..k).step_by(2).map(|v| v as f64).product::<f64>() };
        for n in 1..=5 {
            let (x, w) = gauss_hermite_normal(n).unwrap();
            for k in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(k as i32)).sum();
                assert!((q - moment(k)).abs() < 1e-12 * moment(k).max(1.0), "n={n} k={k}");
            }
        }
        assert!(gauss_hermite_normal(6).is_err());
    }

    #[test]
    fn quadrature_map_properties() {
        let s = spec(FeatureKind::Gq, 330, 1.0, 0, 8);
        let a = QuadratureMap::new(&s, 7).unwrap();
        let b = QuadratureMap::new(&s, 7).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.dim(), 330);
        assert!((a.weights().sum() - 1.0).abs() < 1e-12);
        let z = a.features(&[0.0; 7]).unwrap();
        for i in 0..165 {
            assert_eq!(z[2 * i + 1], 0.0);
        }
        assert!((z.norm_squared() - 1.0).abs() < 1e-12);
        assert!(QuadratureMap::new(&spec(FeatureKind::Gq, 10, 1.0, 0, 8), 1).is_err());
        // the full 1-d rule reproduces the exact Fourier integral at small lags
        let full = QuadratureMap::new(&spec(FeatureKind::Gq, 6, 1.0, 0, 8), 1).unwrap();
        let k = KernelConfig::gaussian(1.0).unwrap();
        let dot = full.features(&[0.1]).unwrap().dot(&full.features(&[-0.2]).unwrap());
        assert!((dot - kernel_eval(&k, &[0.1], &[-0.2]).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn quadrature_beats_phase_features_on_standardized_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kernel = KernelConfig::gaussian(1.0).unwrap();
        let pairs = random_pairs(&mut rng, 1000, 7, 0.5);
        let gq = spec(FeatureKind::Gq, 330, 1.0, 0, 8).build(7).unwrap();
        let rff = spec(FeatureKind::Rff2, 330, 1.0, 11, 0).build(7).unwrap();
        let err = |m: &dyn FeatureMap| {
            pairs
                .iter()
                .map(|(x, y)| {
                    (m.features(x).unwrap().dot(&m.features(y).unwrap()) - kernel_eval(&kernel, x, y).unwrap()).abs()
                })
                .sum::<f64>()
                / pairs.len() as f64
        };
        let (eg, er) = (err(gq.as_ref()), err(rff.as_ref()));
        assert!(eg < er, "gq {eg} vs rff2 {er}");
    }

    #[test]
    fn eigenmap_is_a_feature_map() {
        let k = KernelConfig::gaussian(1.0).unwrap();
        let dict = vec![vec![0.0], vec![0.5], vec![1.5]];
        let map = eigenmap_from_points(&k, &dict, 3).unwrap();
        let fm: &dyn FeatureMap = &map;
        let batch = fm.features_many(&dict).unwrap();
        for (i, x) in dict.iter().enumerate() {
            let z = fm.features(x).unwrap();
            assert!((batch.row(i).transpose() - z).amax() < 1e-12);
        }
        assert!(spec(FeatureKind::Speed, 3, 1.0, 0, 0).build(1).is_err());
    }

    #[test]
    fn kind_round_trip() {
        for k in [FeatureKind::Rff1, FeatureKind::Rff2, FeatureKind::Taylor, FeatureKind::Gq, FeatureKind::Speed] {
            assert_eq!(k.to_string().parse::<FeatureKind>().unwrap(), k);
        }
    }
}
