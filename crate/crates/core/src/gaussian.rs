//! Dense multivariate-Gaussian primitives.
//!
//! These are the reference implementations that the structured models are
//! checked against. Every negative log-likelihood here is the two-term
//! objective `log|Σ| + rᵀΣ⁻¹r` without the `n·log(2π)` constant; see
//! [`full_nll_constant`] for the missing term.

use crate::eigen::{jacobi_eigen, EigenPairs, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE};
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::{norm_sq, Real};

/// Symmetry tolerance accepted by [`DenseCovariance::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// `n·log(2π)`, the constant omitted from every NLL in this crate.
pub fn full_nll_constant(n: usize) -> f64 {
    n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Gaussian with mean `μ` and precision `Λ = L Lᵀ`, `L` lower triangular
/// with a strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGaussian<T> {
    mean: Vec<T>,
    chol_precision: Matrix<T>,
}

impl<T: Real> DenseGaussian<T> {
    pub fn new(mean: Vec<T>, chol_precision: Matrix<T>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidConfig("Gaussian dimension must be ≥ 1".into()));
        }
        check_len("precision factor rows", n, chol_precision.rows())?;
        check_len("precision factor cols", n, chol_precision.cols())?;
        if let Some((row, col)) = chol_precision.first_above_diagonal() {
            return Err(Error::NotLowerTriangular { row, col });
        }
        check_diagonal(&chol_precision)?;
        Ok(Self {
            mean,
            chol_precision,
        })
    }

    /// Zero-mean Gaussian with the given precision factor.
    pub fn centered(chol_precision: Matrix<T>) -> Result<Self> {
        let n = chol_precision.rows();
        Self::new(vec![T::zero(); n], chol_precision)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn chol_precision(&self) -> &Matrix<T> {
        &self.chol_precision
    }

    /// `Λ = L Lᵀ`.
    pub fn precision(&self) -> Matrix<T> {
        self.chol_precision.gram_outer()
    }

    /// `Σ = (L Lᵀ)⁻¹`, exactly symmetric.
    pub fn covariance(&self) -> DenseCovariance<T> {
        let m = linalg::inverse_from_cholesky(&self.chol_precision).expect("validated factor");
        DenseCovariance { matrix: m }
    }

    /// `y = Lᵀ(x − μ)`.
    pub fn whiten(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("observation", self.dim(), x.len())?;
        let r: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        self.chol_precision.tr_matvec(&r)
    }
}

fn check_diagonal<T: Real>(l: &Matrix<T>) -> Result<()> {
    for i in 0..l.rows() {
        let d = l[(i, i)];
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::InvalidFactor {
                index: i,
                value: d.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// Dense symmetric covariance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseCovariance<T> {
    matrix: Matrix<T>,
}

impl<T: Real> DenseCovariance<T> {
    /// Validates squareness and symmetry (absolute tolerance
    /// [`SYMMETRY_TOLERANCE`]). Positive definiteness is checked lazily by
    /// the operations that factor the matrix.
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        check_len("covariance (square)", matrix.rows(), matrix.cols())?;
        let asym = matrix.asymmetry().to_f64_lossy();
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Matrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.matrix
    }
}

/// Per-example objective `log|Σ| + ‖Lᵀ(x − μ)‖² = −2 Σ log l_ii + ‖y‖²`.
pub fn nll_dense<T: Real>(g: &DenseGaussian<T>, x: &[T]) -> Result<T> {
    let y = g.whiten(x)?;
    Ok(logdet_cov(g)? + norm_sq(&y))
}

/// `log|Σ| = −2 Σ log l_ii`.
pub fn logdet_cov<T: Real>(g: &DenseGaussian<T>) -> Result<T> {
    check_diagonal(&g.chol_precision)?;
    let s: T = g.chol_precision.diag().into_iter().map(|d| d.ln()).sum();
    Ok(-T::lit(2.0) * s)
}

/// `μ + y` with `Lᵀ y = u`. For standard-normal `u` the result is
/// distributed as `N(μ, (L Lᵀ)⁻¹)`.
pub fn sample_dense<T: Real>(g: &DenseGaussian<T>, u: &[T]) -> Result<Vec<T>> {
    check_len("noise vector", g.dim(), u.len())?;
    let y = linalg::solve_lower_transpose(&g.chol_precision, u)?;
    Ok(y.iter().zip(&g.mean).map(|(&a, &b)| a + b).collect())
}

/// `D_KL(N(0, Σ₀) ‖ N(0, Σ₁))`, clamped at zero against rounding.
pub fn gaussian_kl<T: Real>(sigma0: &DenseCovariance<T>, sigma1: &DenseCovariance<T>) -> Result<T> {
    let n = sigma0.dim();
    check_len("KL covariance", n, sigma1.dim())?;
    let m0 = linalg::cholesky(&sigma0.matrix)?;
    let m1 = linalg::cholesky(&sigma1.matrix)?;
    // tr(Σ₁⁻¹Σ₀) = ‖M₁⁻¹M₀‖_F²
    let m1_inv = linalg::invert_lower(&m1)?;
    let mut trace = T::zero();
    for i in 0..n {
        for j in 0..=i {
            let mut s = T::zero();
            for k in j..=i {
                s += m1_inv[(i, k)] * m0[(k, j)];
            }
            trace += s * s;
        }
    }
    let two = T::lit(2.0);
    let logdet0: T = m0.diag().into_iter().map(|d| two * d.ln()).sum();
    let logdet1: T = m1.diag().into_iter().map(|d| two * d.ln()).sum();
    let kl = T::lit(0.5) * (trace - T::lit(n as f64) + logdet1 - logdet0);
    Ok(kl.max(T::zero()))
}

/// `D_KL(N(0, Σ₀) ‖ N(0, Σ₁))` with `Σ₀ = (L Lᵀ)⁻¹` given by its
/// precision factor, avoiding a refactorization of the inverted matrix:
/// `tr(Σ₁⁻¹Σ₀) = ‖M₁⁻¹ L⁻ᵀ‖_F²`.
pub fn kl_precision_to_covariance<T: Real>(
    g0: &DenseGaussian<T>,
    sigma1: &DenseCovariance<T>,
) -> Result<T> {
    let n = g0.dim();
    check_len("KL covariance", n, sigma1.dim())?;
    let m1 = linalg::cholesky(&sigma1.matrix)?;
    let m1_inv = linalg::invert_lower(&m1)?;
    // L⁻ᵀ is upper triangular: (L⁻ᵀ)_kj = (L⁻¹)_jk, nonzero for k ≤ j
    let l_inv = linalg::invert_lower(&g0.chol_precision)?;
    let mut trace = T::zero();
    for i in 0..n {
        let row = m1_inv.row(i);
        for j in 0..n {
            let mut s = T::zero();
            for k in 0..=i.min(j) {
                s += row[k] * l_inv[(j, k)];
            }
            trace += s * s;
        }
    }
    let two = T::lit(2.0);
    let logdet0 = logdet_cov(g0)?;
    let logdet1: T = m1.diag().into_iter().map(|d| two * d.ln()).sum();
    let kl = T::lit(0.5) * (trace - T::lit(n as f64) + logdet1 - logdet0);
    Ok(kl.max(T::zero()))
}

/// Entrywise Frobenius distance `‖A − B‖_F`.
pub fn frobenius_dist<T: Real>(a: &DenseCovariance<T>, b: &DenseCovariance<T>) -> Result<T> {
    Ok(a.matrix.sub(&b.matrix)?.frobenius_norm())
}

/// Spectral decomposition with descending eigenvalues (cyclic Jacobi,
/// relative off-diagonal tolerance 1e-12, at most 100 sweeps).
pub fn sym_eigen<T: Real>(a: &DenseCovariance<T>) -> Result<EigenPairs<T>> {
    jacobi_eigen(&a.matrix, JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS)
}

/// Lower-triangular `M` with `M Mᵀ = a`.
pub fn chol_factor<T: Real>(a: &DenseCovariance<T>) -> Result<Matrix<T>> {
    linalg::cholesky(&a.matrix)
}

/// `log|Σ| + rᵀΣ⁻¹r` for a Gaussian given by its covariance.
pub fn nll_covariance<T: Real>(sigma: &DenseCovariance<T>, mean: &[T], x: &[T]) -> Result<T> {
    check_len("mean", sigma.dim(), mean.len())?;
    check_len("observation", sigma.dim(), x.len())?;
    let m = linalg::cholesky(&sigma.matrix)?;
    let r: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let z = linalg::solve_lower(&m, &r)?;
    let two = T::lit(2.0);
    let logdet: T = m.diag().into_iter().map(|d| two * d.ln()).sum();
    Ok(logdet + norm_sq(&z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor_zero_residual() {
        let g = DenseGaussian::new(vec![0.0], Matrix::identity(1)).unwrap();
        assert_eq!(nll_dense(&g, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn scalar_nll_by_hand() {
        let g = DenseGaussian::new(vec![0.0], Matrix::from_rows(&[&[2.0]])).unwrap();
        let v = nll_dense(&g, &[0.5]).unwrap();
        let expected = -2.0 * 2f64.ln() + 1.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - -0.386294).abs() < 1e-6);
    }

    #[test]
    fn logdet_depends_only_on_diagonal() {
        let l = Matrix::from_rows(&[&[2.0, 0.0], &[-7.5, 3.0]]);
        let g = DenseGaussian::centered(l).unwrap();
        let v = logdet_cov(&g).unwrap();
        assert!((v - -2.0 * (2f64.ln() + 3f64.ln())).abs() < 1e-14);
        assert!((v - -3.583519).abs() < 1e-6);
    }

    #[test]
    fn invalid_factors_rejected() {
        assert!(matches!(
            DenseGaussian::new(vec![0.0, 0.0], Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]])),
            Err(Error::InvalidFactor { index: 1, .. })
        ));
        assert!(matches!(
            DenseGaussian::new(vec![0.0, 0.0], Matrix::from_rows(&[&[1.0, 0.5], &[0.0, 1.0]])),
            Err(Error::NotLowerTriangular { row: 0, col: 1 })
        ));
        assert!(DenseGaussian::<f64>::new(vec![], Matrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = DenseGaussian::centered(Matrix::<f64>::identity(3)).unwrap();
        assert!(matches!(
            nll_dense(&g, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2, .. })
        ));
        assert!(sample_dense(&g, &[0.0]).is_err());
    }

    #[test]
    fn sampling_edge_cases() {
        let l = Matrix::from_rows(&[&[1.5, 0.0], &[0.3, 0.7]]);
        let g = DenseGaussian::new(vec![1.0, -2.0], l).unwrap();
        assert_eq!(sample_dense(&g, &[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        let id = DenseGaussian::centered(Matrix::identity(3)).unwrap();
        assert_eq!(sample_dense(&id, &[0.1, -0.2, 0.3]).unwrap(), vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn scalar_kl_by_hand() {
        let s0 = DenseCovariance::new(Matrix::from_rows(&[&[1.0]])).unwrap();
        let s1 = DenseCovariance::new(Matrix::from_rows(&[&[4.0]])).unwrap();
        let kl = gaussian_kl(&s0, &s1).unwrap();
        assert!((kl - 0.5 * (0.25 - 1.0 + 4f64.ln())).abs() < 1e-15);
        assert!((kl - 0.318147).abs() < 1e-6);
        assert_eq!(gaussian_kl(&s1, &s1).unwrap(), 0.0);
    }

    #[test]
    fn kl_rejects_indefinite_input() {
        let bad = DenseCovariance::new(Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap();
        assert!(matches!(
            gaussian_kl(&bad, &DenseCovariance::identity(2)),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn frobenius_small_cases() {
        let i2 = DenseCovariance::<f64>::identity(2);
        let z = DenseCovariance::new(Matrix::zeros(2, 2)).unwrap();
        assert_eq!(frobenius_dist(&i2, &i2).unwrap(), 0.0);
        assert_eq!(frobenius_dist(&i2, &z).unwrap(), 2f64.sqrt());
        assert!(frobenius_dist(&i2, &DenseCovariance::identity(3)).is_err());
    }

    #[test]
    fn eigen_two_by_two() {
        let a = DenseCovariance::new(Matrix::from_rows(&[&[2.0f64, 1.0], &[1.0, 2.0]])).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        assert!(DenseCovariance::new(Matrix::from_rows(&[&[1.0, 0.1], &[0.0, 1.0]])).is_err());
    }

    #[test]
    fn full_constant() {
        assert!((full_nll_constant(2) - 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }
}
