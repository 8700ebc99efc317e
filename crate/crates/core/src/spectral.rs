//! Batch eigendecomposition of kernel matrices and the eigenmap feature space.
//!
//! An [`Eigenmap`] built from the `m` dominant eigenpairs `(lambda_i, v_i)` of a
//! Gram matrix is the `m x n` matrix `Psi` whose i-th row is `v_i^T / sqrt(lambda_i)`.
//! Applying it to the kernel vector of a point gives that point's coordinates
//! along the dominant kernel eigenfunctions.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, numerical, Result};
use crate::kernel::{cross_gram, gram_matrix, kernel_vector, GramMatrix, KernelConfig};

/// Relative eigenvalue cutoff: eigenpairs with `lambda <= EIGEN_CUTOFF * n * lambda_max`
/// are never used in an eigenmap.
pub const EIGEN_CUTOFF: f64 = 1e-10;

/// Eigenvalues (descending) with their orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub(crate) values: DVector<f64>,
    pub(crate) vectors: DMatrix<f64>,
}

impl EigenSystem {
    /// Sorts the pairs by descending eigenvalue and applies the sign convention
    /// (largest-magnitude entry of every column is positive).
    pub fn new(values: DVector<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        let n = values.len();
        if vectors.nrows() != n || vectors.ncols() != n {
            return arg(format!("eigenvector matrix is {}x{}, expected {n}x{n}", vectors.nrows(), vectors.ncols()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return numerical("non-finite eigenvalue");
        }
        let mut sys = Self { values, vectors };
        sys.sort_descending();
        sys.normalize_signs();
        Ok(sys)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn sort_descending(&mut self) {
        let n = self.values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]));
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return;
        }
        let values = DVector::from_iterator(n, order.iter().map(|&i| self.values[i]));
        let mut vectors = DMatrix::zeros(self.vectors.nrows(), n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &self.vectors.column(src));
        }
        self.values = values;
        self.vectors = vectors;
    }

    pub(crate) fn normalize_signs(&mut self) {
        for mut col in self.vectors.column_iter_mut() {
            let mut best = 0.0f64;
            let mut sign = 1.0;
            for &v in col.iter() {
                if v.abs() > best {
                    best = v.abs();
                    sign = v.signum();
                }
            }
            if sign < 0.0 {
                col.neg_mut();
            }
        }
    }

    /// Threshold below which eigenvalues are treated as numerically zero.
    pub fn cutoff(&self) -> f64 {
        let lmax = self.values.iter().copied().fold(0.0f64, f64::max);
        EIGEN_CUTOFF * self.len() as f64 * lmax
    }

    /// Number of eigenvalues strictly above [`EigenSystem::cutoff`].
    pub fn usable_rank(&self) -> usize {
        let cut = self.cutoff();
        self.values.iter().take_while(|&&v| v > cut).count()
    }

    /// `V Lambda V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_rank(self.len())
    }

    /// Best rank-`m` approximation `V_m Lambda_m V_m^T`.
    pub fn reconstruct_rank(&self, m: usize) -> DMatrix<f64> {
        let m = m.min(self.len());
        let vm = self.vectors.columns(0, m);
        let mut scaled = vm.clone_owned();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.values[j];
        }
        scaled * vm.transpose()
    }

    /// Largest absolute entry of `V^T V - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let n = g.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Restores orthonormal columns with two passes of modified Gram-Schmidt,
    /// processing columns in eigenvalue order.
    pub fn reorthonormalize(&mut self) {
        let n = self.vectors.ncols();
        for _ in 0..2 {
            for j in 0..n {
                for i in 0..j {
                    let proj = self.vectors.column(i).dot(&self.vectors.column(j));
                    let ci = self.vectors.column(i).clone_owned();
                    self.vectors.column_mut(j).axpy(-proj, &ci, 1.0);
                }
                let norm = self.vectors.column(j).norm();
                if norm > 0.0 {
                    self.vectors.column_mut(j).scale_mut(1.0 / norm);
                }
            }
        }
    }
}

/// Full symmetric eigendecomposition of a Gram matrix.
pub fn decompose(k: &GramMatrix) -> Result<EigenSystem> {
    decompose_symmetric(k.entries())
}

/// Full eigendecomposition of any symmetric matrix (only the lower triangle is read).
pub fn decompose_symmetric(k: &DMatrix<f64>) -> Result<EigenSystem> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return arg(format!("expected a non-empty square matrix, got {}x{}", k.nrows(), k.ncols()));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return numerical("matrix has non-finite entries");
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| k[(i, j)]);
    let evd = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| crate::Error::Numerical(format!("symmetric eigensolver did not converge ({e:?}) for n = {n}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = DVector::from_fn(n, |i, _| s[i]);
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    EigenSystem::new(values, vectors)
}

/// The explicit eigenfunction feature map `Psi = Lambda_m^{-1/2} V_m^T`.
#[derive(Debug, Clone)]
pub struct Eigenmap {
    psi: DMatrix<f64>,
    dictionary: Vec<Vec<f64>>,
    kernel: KernelConfig,
    eigenvalues: DVector<f64>,
}

impl Eigenmap {
    /// The `m x n` map matrix.
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn dictionary(&self) -> &[Vec<f64>] {
        &self.dictionary
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    /// The `m` eigenvalues the map was built from.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn dictionary_len(&self) -> usize {
        self.psi.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.dictionary[0].len()
    }

    /// Embeds a batch of points; row `i` of the result is `embed(points[i])`.
    pub fn embed_many(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let kx = cross_gram(&self.kernel, points, &self.dictionary)?;
        Ok(kx * self.psi.transpose())
    }
}

/// Builds the `m`-dimensional eigenmap from an eigensystem of the dictionary's Gram matrix.
pub fn build_eigenmap(sys: &EigenSystem, dictionary: &[Vec<f64>], kernel: &KernelConfig, m: usize) -> Result<Eigenmap> {
    let n = sys.len();
    if dictionary.len() != n {
        return arg(format!("eigensystem has {n} pairs but dictionary has {} points", dictionary.len()));
    }
    if m == 0 {
        return arg("eigenmap dimension m must be positive");
    }
    let rank = sys.usable_rank();
    if m > rank {
        return arg(format!("requested m = {m} exceeds the numerically usable rank {rank}"));
    }
    let mut psi = DMatrix::zeros(m, n);
    for i in 0..m {
        let scale = 1.0 / sys.values[i].sqrt();
        for j in 0..n {
            psi[(i, j)] = sys.vectors[(j, i)] * scale;
        }
    }
    Ok(Eigenmap {
        psi,
        dictionary: dictionary.to_vec(),
        kernel: *kernel,
        eigenvalues: sys.values.rows(0, m).clone_owned(),
    })
}

/// Convenience: Gram matrix, decomposition and eigenmap in one call.
pub fn eigenmap_from_points(kernel: &KernelConfig, dictionary: &[Vec<f64>], m: usize) -> Result<Eigenmap> {
    let g = gram_matrix(kernel, dictionary)?;
    let sys = decompose(&g)?;
    build_eigenmap(&sys, dictionary, kernel, m)
}

/// Coordinates of `x` along the map's eigenfunctions: `Psi k_x`.
pub fn embed(map: &Eigenmap, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != map.input_dim() {
        return arg(format!("input has dimension {}, dictionary has {}", x.len(), map.input_dim()));
    }
    let kx = kernel_vector(&map.kernel, &map.dictionary, x)?;
    Ok(&map.psi * kx)
}

/// Gram matrix of the dictionary reconstructed from embedded dot products:
/// `(Psi K)^T (Psi K)`.
pub fn reconstruct_gram(map: &Eigenmap) -> Result<DMatrix<f64>> {
    let k = gram_matrix(&map.kernel, &map.dictionary)?;
    let e = &map.psi * k.entries();
    Ok(e.transpose() * e)
}

/// Mean entrywise-normalized Frobenius error
/// `sqrt( (1/(rows*cols)) * sum_ij (|k_ij - khat_ij| / |k_ij|)^2 )`.
pub fn frobenius_error(k: &DMatrix<f64>, k_hat: &DMatrix<f64>) -> Result<f64> {
    if k.shape() != k_hat.shape() {
        return arg(format!("shape mismatch: {:?} vs {:?}", k.shape(), k_hat.shape()));
    }
    let mut acc = 0.0;
    for (a, b) in k.iter().zip(k_hat.iter()) {
        if *a == 0.0 {
            return arg("reference matrix has a zero entry; normalized error undefined");
        }
        let r = (a - b).abs() / a.abs();
        acc += r * r;
    }
    Ok((acc / (k.nrows() * k.ncols()) as f64).sqrt())
}

/// Unnormalized Frobenius norm of `k - k_hat`.
pub fn plain_frobenius_error(k: &DMatrix<f64>, k_hat: &DMatrix<f64>) -> Result<f64> {
    if k.shape() != k_hat.shape() {
        return arg(format!("shape mismatch: {:?} vs {:?}", k.shape(), k_hat.shape()));
    }
    Ok((k - k_hat).norm())
}

/// Principal angles (radians, ascending) between the RKHS subspaces spanned by
/// two eigenmaps' eigenfunctions.
pub fn principal_angles(a: &Eigenmap, b: &Eigenmap) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return arg(format!("subspace dimensions differ: {} vs {}", a.dim(), b.dim()));
    }
    if a.kernel != b.kernel {
        return arg("eigenmaps use different kernels");
    }
    let kab = cross_gram(&a.kernel, &a.dictionary, &b.dictionary)?;
    let overlap = &a.psi * kab * b.psi.transpose();
    let sv = overlap.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|&s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Root-sum-square of the principal angles between two eigenfunction subspaces,
/// in `[0, m * pi / 2]`.
pub fn subspace_distance(a: &Eigenmap, b: &Eigenmap) -> Result<f64> {
    Ok(principal_angles(a, b)?.iter().map(|t| t * t).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> (KernelConfig, Vec<Vec<f64>>) {
        // sigma chosen so k(x1, x2) = 0.5
        let k = KernelConfig::gaussian(1.0).unwrap();
        let gap = (2.0 * 2f64.ln()).sqrt();
        (k, vec![vec![0.0], vec![gap]])
    }

    fn random_points(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn decompose_trivial_and_two_by_two() {
        let sys = decompose_symmetric(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(sys.values()[0], 1.0);
        assert_eq!(sys.vectors()[(0, 0)].abs(), 1.0);

        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let sys = decompose_symmetric(&k).unwrap();
        assert_relative_eq!(sys.values()[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(sys.values()[1], 0.5, epsilon = 1e-14);
        let h = 0.5f64.sqrt();
        assert_relative_eq!(sys.vectors()[(0, 0)].abs(), h, epsilon = 1e-14);
        assert_relative_eq!(sys.vectors()[(1, 0)], sys.vectors()[(0, 0)], epsilon = 1e-14);
        assert_relative_eq!(sys.vectors()[(1, 1)], -sys.vectors()[(0, 1)], epsilon = 1e-14);
    }

    #[test]
    fn decompose_random_gram_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = KernelConfig::gaussian(0.8).unwrap();
        let g = gram_matrix(&k, &random_points(&mut rng, 20, 3)).unwrap();
        let sys = decompose(&g).unwrap();
        assert!(sys.values().as_slice().windows(2).all(|w| w[0] >= w[1]));
        assert!(sys.values().iter().all(|&v| v >= -1e-10 * 20.0));
        assert!(sys.orthonormality_error() < 1e-8);
        assert!((sys.reconstruct() - g.entries()).amax() < 1e-8);
        for col in sys.vectors().column_iter() {
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn eigenmap_two_point_closed_form() {
        let (k, dict) = two_point();
        let map = eigenmap_from_points(&k, &dict, 2).unwrap();
        let p = map.psi();
        let a = 1.0 / 3f64.sqrt();
        assert_relative_eq!(p[(0, 0)], a, epsilon = 1e-12);
        assert_relative_eq!(p[(0, 1)], a, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], -p[(1, 0)], epsilon = 1e-12);

        let e1 = embed(&map, &dict[0]).unwrap();
        let e2 = embed(&map, &dict[1]).unwrap();
        assert_relative_eq!(e1[0], 0.75f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(e1[1].abs(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(e1.dot(&e2), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_point_map() {
        let k = KernelConfig::gaussian(1.0).unwrap();
        let dict = vec![vec![0.2, -0.4]];
        let map = eigenmap_from_points(&k, &dict, 1).unwrap();
        assert_relative_eq!(map.psi()[(0, 0)], 1.0, epsilon = 1e-15);
        let x = [0.5, 0.1];
        let e = embed(&map, &x).unwrap();
        assert_relative_eq!(e[0], crate::kernel::kernel_eval(&k, &dict[0], &x).unwrap(), epsilon = 1e-15);
        assert!(embed(&map, &[0.0]).is_err());
    }

    #[test]
    fn m_above_usable_rank_is_rejected() {
        let k = KernelConfig::gaussian(1.0).unwrap();
        // three copies of one point: rank 1
        let dict = vec![vec![0.1]; 3];
        let sys = decompose(&gram_matrix(&k, &dict).unwrap()).unwrap();
        assert_eq!(sys.usable_rank(), 1);
        let err = build_eigenmap(&sys, &dict, &k, 2).unwrap_err();
        assert!(err.to_string().contains("usable rank 1"));
        assert!(build_eigenmap(&sys, &dict, &k, 1).is_ok());
    }

    #[test]
    fn reconstruction_examples() {
        let (k, dict) = two_point();
        let full = eigenmap_from_points(&k, &dict, 2).unwrap();
        let g = gram_matrix(&k, &dict).unwrap();
        assert!((reconstruct_gram(&full).unwrap() - g.entries()).amax() < 1e-12);
        let one = eigenmap_from_points(&k, &dict, 1).unwrap();
        let khat = reconstruct_gram(&one).unwrap();
        for v in khat.iter() {
            assert_relative_eq!(*v, 0.75, epsilon = 1e-12);
        }
        // elementwise oracle: diagonal errors 0.25/1, off-diagonal 0.25/0.5
        let expected = ((2.0 * 0.25f64.powi(2) + 2.0 * 0.5f64.powi(2)) / 4.0).sqrt();
        assert_relative_eq!(frobenius_error(g.entries(), &khat).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn frobenius_examples() {
        let k = DMatrix::from_element(1, 1, 1.0);
        assert_relative_eq!(frobenius_error(&k, &DMatrix::from_element(1, 1, 0.9)).unwrap(), 0.1, epsilon = 1e-15);
        assert_eq!(frobenius_error(&k, &k).unwrap(), 0.0);
        assert!(frobenius_error(&DMatrix::from_element(1, 1, 0.0), &k).is_err());
        assert!(frobenius_error(&k, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn eckart_young_and_monotone_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = KernelConfig::gaussian(1.0).unwrap();
        let dict = random_points(&mut rng, 30, 2);
        let g = gram_matrix(&k, &dict).unwrap();
        let sys = decompose(&g).unwrap();
        let rank = sys.usable_rank();
        let mut prev = f64::INFINITY;
        for m in 1..=rank {
            let map = build_eigenmap(&sys, &dict, &k, m).unwrap();
            let err = plain_frobenius_error(g.entries(), &reconstruct_gram(&map).unwrap()).unwrap();
            let tail: f64 = sys.values().iter().skip(m).map(|l| l * l).sum::<f64>().sqrt();
            assert!((err - tail).abs() < 1e-8, "m={m}: {err} vs {tail}");
            assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn eigenfunctions_are_rkhs_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = KernelConfig::gaussian(1.0).unwrap();
        let dict = random_points(&mut rng, 25, 3);
        let g = gram_matrix(&k, &dict).unwrap();
        let map = eigenmap_from_points(&k, &dict, 10).unwrap();
        let gram_of_fns = map.psi() * g.entries() * map.psi().transpose();
        assert!((gram_of_fns - DMatrix::identity(10, 10)).amax() < 1e-8);
    }

    #[test]
    fn subspace_distance_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = KernelConfig::gaussian(1.0).unwrap();
        let dict = random_points(&mut rng, 15, 2);
        let a = eigenmap_from_points(&k, &dict, 5).unwrap();
        assert!(subspace_distance(&a, &a).unwrap() < 1e-6);
        let mut perm = dict.clone();
        perm.reverse();
        let b = eigenmap_from_points(&k, &perm, 5).unwrap();
        assert!(subspace_distance(&a, &b).unwrap() < 1e-6);

        let other = random_points(&mut rng, 15, 2);
        let c = eigenmap_from_points(&k, &other, 5).unwrap();
        let dac = subspace_distance(&a, &c).unwrap();
        let dca = subspace_distance(&c, &a).unwrap();
        assert!(dac > 1e-3);
        assert!((dac - dca).abs() < 1e-10);
        assert!(dac <= 5.0 * std::f64::consts::FRAC_PI_2);

        let d4 = eigenmap_from_points(&k, &other, 4).unwrap();
        assert!(subspace_distance(&a, &d4).is_err());
    }

    #[test]
    fn orthogonal_one_dimensional_subspaces() {
        // two points so far apart that their kernel sections are orthogonal
        let k = KernelConfig::gaussian(1.0).unwrap();
        let a = eigenmap_from_points(&k, &[vec![0.0]], 1).unwrap();
        let b = eigenmap_from_points(&k, &[vec![100.0]], 1).unwrap();
        assert_relative_eq!(subspace_distance(&a, &b).unwrap(), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }
}
