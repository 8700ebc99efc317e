//! Rank-1 modifications of a symmetric eigendecomposition.
//!
//! Given `K = V diag(lambda) V^T` and a perturbation `rho * kappa * kappa^T`, the
//! updated eigenvalues are the roots of the secular equation
//!
//! ```text
//! w(t) = 1 + rho * sum_i kt_i^2 / (lambda_i - t),    kt = V^T kappa
//! ```
//!
//! Every root is bracketed between consecutive old eigenvalues (or by
//! `lambda_max + rho * |kt|^2` / `lambda_min + rho * |kt|^2` at the ends), and
//! the updated eigenvector for root `t_j` is `V (Lambda - t_j I)^{-1} kt`,
//! normalized.
//!
//! [`SecularUpdate`] deflates negligible components and coincident eigenvalues,
//! solves each root with bisection-safeguarded Newton iterations relative to the
//! nearest pole, and builds eigenvectors from a perturbation vector recomputed
//! from the computed roots so they remain numerically orthogonal.
//!
//! [`grow_eigensystem`] extends the eigensystem of a Gram matrix by one point
//! using an expansion followed by two such updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, numerical, Result};
use crate::spectral::EigenSystem;

/// A symmetric rank-1 term `rho * kappa * kappa^T`.
#[derive(Debug, Clone)]
pub struct Rank1Perturbation {
    rho: f64,
    kappa: DVector<f64>,
}

impl Rank1Perturbation {
    pub fn new(rho: f64, kappa: DVector<f64>) -> Result<Self> {
        if !rho.is_finite() || rho == 0.0 {
            return arg(format!("rank-1 weight rho must be finite and nonzero, got {rho}"));
        }
        if kappa.iter().any(|v| !v.is_finite()) {
            return arg("rank-1 vector has non-finite entries");
        }
        Ok(Self { rho, kappa })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kappa(&self) -> &DVector<f64> {
        &self.kappa
    }
}

/// Relative thresholds used to deflate a secular problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflationTolerance {
    /// `|kt_i| <= zero_component * |kt|` passes eigenpair `i` through unchanged.
    pub zero_component: f64,
    /// Eigenvalues closer than `coincident * max|lambda|` are rotated so one deflates.
    pub coincident: f64,
}

impl Default for DeflationTolerance {
    fn default() -> Self {
        Self { zero_component: 1e-12, coincident: 1e-12 }
    }
}

/// A rank-1 symmetric eigendecomposition update algorithm.
pub trait Rank1Update {
    /// Eigensystem of `V Lambda V^T + rho kappa kappa^T`.
    fn update(&self, sys: &EigenSystem, perturbation: &Rank1Perturbation) -> Result<EigenSystem>;
}

/// Secular-equation update with deflation.
#[derive(Debug, Clone, Copy)]
pub struct SecularUpdate {
    pub deflation: DeflationTolerance,
    /// Relative step size at which Newton iterations stop.
    pub root_tolerance: f64,
    pub max_iter: usize,
}

impl Default for SecularUpdate {
    fn default() -> Self {
        Self { deflation: DeflationTolerance::default(), root_tolerance: 1e-12, max_iter: 200 }
    }
}

/// Reference update that forms the perturbed matrix and re-decomposes it from scratch.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseUpdate;

impl Rank1Update for DenseUpdate {
    fn update(&self, sys: &EigenSystem, p: &Rank1Perturbation) -> Result<EigenSystem> {
        check_len(sys, p)?;
        let mut k = sys.reconstruct();
        k.ger(p.rho, &p.kappa, &p.kappa, 1.0);
        crate::spectral::decompose_symmetric(&k)
    }
}

fn check_len(sys: &EigenSystem, p: &Rank1Perturbation) -> Result<()> {
    if p.kappa.len() != sys.len() {
        return arg(format!("perturbation has length {}, eigensystem has {}", p.kappa.len(), sys.len()));
    }
    Ok(())
}

impl Rank1Update for SecularUpdate {
    fn update(&self, sys: &EigenSystem, p: &Rank1Perturbation) -> Result<EigenSystem> {
        check_len(sys, p)?;
        let kt = sys.vectors.tr_mul(&p.kappa);
        let n = sys.len();
        // Work in ascending order with a positive weight; a negative weight is
        // handled by negating the spectrum, which reverses the order.
        let (d, z, mut vectors, flip) = if p.rho > 0.0 {
            let d: Vec<f64> = (0..n).rev().map(|i| sys.values[i]).collect();
            let z: Vec<f64> = (0..n).rev().map(|i| kt[i]).collect();
            let v = reorder_columns(&sys.vectors, (0..n).rev());
            (d, z, v, false)
        } else {
            let d: Vec<f64> = (0..n).map(|i| -sys.values[i]).collect();
            let z: Vec<f64> = kt.iter().copied().collect();
            (d, z, sys.vectors.clone(), true)
        };
        let mut values = self.solve_ascending(&d, &z, p.rho.abs(), Some(&mut vectors))?;
        if flip {
            values.iter_mut().for_each(|v| *v = -*v);
        }
        EigenSystem::new(DVector::from_vec(values), vectors)
    }
}

fn reorder_columns(m: &DMatrix<f64>, order: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let order: Vec<usize> = order.collect();
    let mut out = DMatrix::zeros(m.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        out.set_column(dst, &m.column(src));
    }
    out
}

/// A secular root stored relative to its nearest pole so that differences
/// `root - d_i` can be formed without cancellation.
#[derive(Debug, Clone, Copy)]
struct Root {
    origin: usize,
    offset: f64,
}

impl SecularUpdate {
    /// Solves `diag(d) + rho z z^T` for ascending `d` and `rho > 0`. When
    /// `vectors` is given, its columns (aligned with `d`) are replaced by the
    /// updated eigenvectors. Returns the eigenvalues aligned with those columns.
    fn solve_ascending(
        &self,
        d: &[f64],
        z: &[f64],
        rho: f64,
        mut vectors: Option<&mut DMatrix<f64>>,
    ) -> Result<Vec<f64>> {
        let n = d.len();
        let mut values = d.to_vec();
        let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0 || znorm == 0.0 {
            return Ok(values);
        }
        let mut z = z.to_vec();
        let mut deflated = vec![false; n];
        for i in 0..n {
            if z[i].abs() <= self.deflation.zero_component * znorm {
                deflated[i] = true;
                z[i] = 0.0;
            }
        }
        let scale = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut prev: Option<usize> = None;
        for i in 0..n {
            if deflated[i] {
                continue;
            }
            if let Some(p) = prev {
                if d[i] - d[p] <= self.deflation.coincident * scale {
                    let r = z[p].hypot(z[i]);
                    let (c, s) = (z[i] / r, z[p] / r);
                    z[i] = r;
                    z[p] = 0.0;
                    deflated[p] = true;
                    if let Some(v) = vectors.as_deref_mut() {
                        let vp = v.column(p).clone_owned();
                        let vi = v.column(i).clone_owned();
                        v.set_column(p, &(&vp * c - &vi * s));
                        v.set_column(i, &(&vp * s + &vi * c));
                    }
                }
            }
            prev = Some(i);
        }
        let active: Vec<usize> = (0..n).filter(|&i| !deflated[i]).collect();
        if active.is_empty() {
            return Ok(values);
        }
        let dd: Vec<f64> = active.iter().map(|&i| d[i]).collect();
        let zz: Vec<f64> = active.iter().map(|&i| z[i]).collect();
        let roots = self.secular_roots_ascending(&dd, &zz, rho)?;
        for (j, r) in roots.iter().enumerate() {
            values[active[j]] = dd[r.origin] + r.offset;
        }
        if let Some(v) = vectors {
            let k = active.len();
            // root_j - d_i computed relative to root_j's pole
            let gap = |i: usize, j: usize| (dd[roots[j].origin] - dd[i]) + roots[j].offset;
            let mut zhat = vec![0.0; k];
            for i in 0..k {
                let mut prod = gap(i, k - 1) / rho;
                for j in 0..i {
                    prod *= gap(i, j) / (dd[j] - dd[i]);
                }
                for j in i..k - 1 {
                    prod *= gap(i, j) / (dd[j + 1] - dd[i]);
                }
                zhat[i] = prod.max(0.0).sqrt().copysign(zz[i]);
            }
            let mut u = DMatrix::zeros(k, k);
            for j in 0..k {
                for i in 0..k {
                    u[(i, j)] = -zhat[i] / gap(i, j);
                }
                let norm = u.column(j).norm();
                if !norm.is_finite() || norm == 0.0 {
                    return numerical(format!("degenerate eigenvector for secular root {j} of {k}"));
                }
                u.column_mut(j).scale_mut(1.0 / norm);
            }
            let block = reorder_columns(v, active.iter().copied()) * u;
            for (j, &col) in active.iter().enumerate() {
                v.set_column(col, &block.column(j));
            }
        }
        Ok(values)
    }

    /// Roots of `1 + rho sum z_i^2 / (d_i - t)` for strictly ascending `d`,
    /// nonzero `z` and `rho > 0`; root `j` lies in `(d_j, d_{j+1})`.
    fn secular_roots_ascending(&self, d: &[f64], z: &[f64], rho: f64) -> Result<Vec<Root>> {
        let k = d.len();
        let zsq: Vec<f64> = z.iter().map(|v| v * v).collect();
        let total: f64 = zsq.iter().sum();
        let mut roots = Vec::with_capacity(k);
        for j in 0..k {
            let (origin, lo, hi) = if j + 1 < k {
                let gap = d[j + 1] - d[j];
                let mid = 0.5 * gap;
                let f_mid = 1.0 + rho * (0..k).map(|l| zsq[l] / ((d[l] - d[j]) - mid)).sum::<f64>();
                if f_mid >= 0.0 {
                    (j, 0.0, mid)
                } else {
                    (j + 1, -(gap - mid), 0.0)
                }
            } else {
                (j, 0.0, rho * total)
            };
            let offset = self.solve_one(d, &zsq, rho, origin, lo, hi, j)?;
            roots.push(Root { origin, offset });
        }
        Ok(roots)
    }

    /// Newton iteration on `g(mu) = mu * w(d_o + mu)`, which has no pole at the
    /// origin, safeguarded by bisection on the sign of `w`.
    #[allow(clippy::too_many_arguments)]
    fn solve_one(&self, d: &[f64], zsq: &[f64], rho: f64, o: usize, lo: f64, hi: f64, j: usize) -> Result<f64> {
        let delta: Vec<f64> = d.iter().map(|v| v - d[o]).collect();
        let eval = |mu: f64| {
            let (mut psi, mut dpsi, mut abs_sum) = (1.0, 0.0, 1.0);
            for (l, (&dl, &zl)) in delta.iter().zip(zsq).enumerate() {
                if l == o {
                    continue;
                }
                let inv = 1.0 / (dl - mu);
                psi += rho * zl * inv;
                dpsi += rho * zl * inv * inv;
                abs_sum += (rho * zl * inv).abs();
            }
            let g = mu * psi - rho * zsq[o];
            let dg = psi + mu * dpsi;
            // rounding-error bound of the evaluated g
            let noise = 2.0 * (delta.len() as f64 + 2.0) * f64::EPSILON * (mu.abs() * abs_sum + rho * zsq[o]);
            (g, dg, psi, noise)
        };
        let (mut a, mut b) = (lo, hi);
        // w(mu) < 0 means the root lies to the right of mu
        let root_is_right = |mu: f64, psi: f64| psi - rho * zsq[o] / mu < 0.0;
        let (_, _, psi0, _) = eval(0.0);
        // the outer bracket ends are attainable; only the pole at 0 is excluded
        let inside = |mu: f64, a: f64, b: f64| mu.is_finite() && mu >= a && mu <= b && mu != 0.0;
        let mut mu = rho * zsq[o] / psi0;
        if !inside(mu, a, b) {
            mu = 0.5 * (a + b);
        }
        for _ in 0..self.max_iter {
            let (g, dg, psi, noise) = eval(mu);
            if g.abs() <= noise {
                return Ok(mu);
            }
            if root_is_right(mu, psi) {
                a = mu;
            } else {
                b = mu;
            }
            let mut next = mu - g / dg;
            if !inside(next, a, b) {
                next = 0.5 * (a + b);
            }
            let step = (next - mu).abs();
            if step <= self.root_tolerance * next.abs() || b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
                return Ok(next);
            }
            mu = next;
        }
        numerical(format!(
            "secular root {j} did not converge in {} iterations (pole {o}, bracket [{a:e}, {b:e}])",
            self.max_iter
        ))
    }
}

/// Updated eigenvalues of `diag(eigenvalues) + rho kt kt^T`, sorted descending.
///
/// `eigenvalues` may be given in either order. Deflation follows
/// [`DeflationTolerance::default`].
pub fn secular_roots(eigenvalues: &[f64], rho: f64, kappa_tilde: &[f64]) -> Result<Vec<f64>> {
    if eigenvalues.len() != kappa_tilde.len() {
        return arg("eigenvalue and kappa lengths differ");
    }
    if !rho.is_finite() || rho == 0.0 {
        return arg("rho must be finite and nonzero");
    }
    let n = eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    let sign = rho.signum();
    // ascending in sign * lambda
    order.sort_by(|&a, &b| (sign * eigenvalues[a]).total_cmp(&(sign * eigenvalues[b])));
    let d: Vec<f64> = order.iter().map(|&i| sign * eigenvalues[i]).collect();
    let z: Vec<f64> = order.iter().map(|&i| kappa_tilde[i]).collect();
    let mut out: Vec<f64> =
        SecularUpdate::default().solve_ascending(&d, &z, rho.abs(), None)?.into_iter().map(|v| sign * v).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Eigenvectors of the perturbed matrix from the direct formula
/// `V_j' = V D_j^{-1} kt / |D_j^{-1} kt|` with `D_j = diag(eigenvalues_old) - t_j I`.
///
/// Column `j` of the result pairs with `eigenvalues_new[j]`. Indices with a
/// negligible `kt` component whose eigenvalue is unchanged pass their old
/// eigenvector through.
pub fn update_eigenvectors(
    v: &DMatrix<f64>,
    eigenvalues_old: &[f64],
    eigenvalues_new: &[f64],
    kappa_tilde: &[f64],
) -> Result<DMatrix<f64>> {
    let n = eigenvalues_old.len();
    if v.ncols() != n || eigenvalues_new.len() != n || kappa_tilde.len() != n {
        return arg("inconsistent sizes in update_eigenvectors");
    }
    let knorm = kappa_tilde.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = DeflationTolerance::default();
    let scale = eigenvalues_old.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let negligible: Vec<bool> = kappa_tilde.iter().map(|k| k.abs() <= tol.zero_component * knorm).collect();
    let mut used = vec![false; n];
    let mut out = DMatrix::zeros(v.nrows(), n);
    for (j, &t) in eigenvalues_new.iter().enumerate() {
        let passthrough =
            (0..n).find(|&i| negligible[i] && !used[i] && (eigenvalues_old[i] - t).abs() <= tol.coincident * scale);
        if let Some(i) = passthrough {
            used[i] = true;
            out.set_column(j, &v.column(i));
            continue;
        }
        let w = DVector::from_fn(n, |i, _| if negligible[i] { 0.0 } else { kappa_tilde[i] / (eigenvalues_old[i] - t) });
        let norm = w.norm();
        if !norm.is_finite() || norm == 0.0 {
            return numerical(format!(
                "eigenvector {j}: |D^-1 kt| is not finite; eigenvalue {t} coincides with an old eigenvalue"
            ));
        }
        let mut col = v * (w / norm);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        out.set_column(j, &col);
    }
    Ok(out)
}

/// Counts interlacing violations between old and updated eigenvalues of a rank-1
/// update with weight `rho` and `|kt|^2 = kappa_norm_sq`.
///
/// With both spectra ascending (`a` old, `b` new):
/// `rho > 0`: `a_i <= b_i <= a_{i+1}` and `a_n <= b_n <= a_n + rho |kt|^2`;
/// `rho < 0`: `a_{i-1} <= b_i <= a_i` and `a_1 + rho |kt|^2 <= b_1 <= a_1`.
pub fn interlacing_violations(old: &[f64], new: &[f64], rho: f64, kappa_norm_sq: f64, slack: f64) -> usize {
    let mut a = old.to_vec();
    let mut b = new.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len();
    let shift = rho * kappa_norm_sq;
    let mut bad = 0;
    for i in 0..n {
        let (lo, hi) = if rho > 0.0 {
            (a[i], if i + 1 < n { a[i + 1] } else { a[i] + shift })
        } else {
            (if i == 0 { a[0] + shift } else { a[i - 1] }, a[i])
        };
        if b[i] < lo - slack || b[i] > hi + slack {
            bad += 1;
        }
    }
    bad
}

/// Diagnostics of one [`grow_eigensystem_with`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GrowTrace {
    /// Interlacing violations observed in the two rank-1 updates.
    pub interlacing_violations: usize,
}

/// Eigensystem of the Gram matrix extended by one point, given the kernel
/// vector of the new point against the existing dictionary and its
/// self-similarity.
pub fn grow_eigensystem(sys: &EigenSystem, k_vec: &DVector<f64>, k_self: f64) -> Result<EigenSystem> {
    grow_eigensystem_with(&SecularUpdate::default(), sys, k_vec, k_self).map(|(s, _)| s)
}

/// [`grow_eigensystem`] with an explicit rank-1 algorithm and interlacing diagnostics.
pub fn grow_eigensystem_with(
    updater: &dyn Rank1Update,
    sys: &EigenSystem,
    k_vec: &DVector<f64>,
    k_self: f64,
) -> Result<(EigenSystem, GrowTrace)> {
    let n = sys.len();
    if k_vec.len() != n {
        return arg(format!("kernel vector has length {}, dictionary has {n}", k_vec.len()));
    }
    if !(k_self.is_finite() && k_self > 0.0) {
        return arg(format!("self-similarity must be positive, got {k_self}"));
    }
    let mut values = DVector::zeros(n + 1);
    values.rows_mut(0, n).copy_from(&sys.values);
    values[n] = k_self / 4.0;
    let mut vectors = DMatrix::zeros(n + 1, n + 1);
    vectors.view_mut((0, 0), (n, n)).copy_from(&sys.vectors);
    vectors[(n, n)] = 1.0;
    let expanded = EigenSystem::new(values, vectors)?;

    let rho = 4.0 / k_self;
    let mut kappa1 = DVector::zeros(n + 1);
    kappa1.rows_mut(0, n).copy_from(k_vec);
    let mut kappa2 = kappa1.clone();
    kappa1[n] = k_self / 2.0;
    kappa2[n] = k_self / 4.0;

    let mut trace = GrowTrace::default();
    let mut current = expanded;
    for (weight, kappa) in [(rho, kappa1), (-rho, kappa2)] {
        let p = Rank1Perturbation::new(weight, kappa)?;
        let next = updater.update(&current, &p)?;
        let knorm = p.kappa.norm_squared();
        let scale = current.values.amax() + weight.abs() * knorm;
        trace.interlacing_violations +=
            interlacing_violations(current.values.as_slice(), next.values.as_slice(), weight, knorm, 1e-12 * scale);
        current = next;
    }
    Ok((current, trace))
}
