//! Eigendecomposition-style low-rank models `Q̂ V̂ Q̂ᵀ + a I`.
//!
//! The triple `(Q̂, log V̂, a)` describes either the precision
//! ([`LowRankMode::PrecisionSide`]) or the covariance
//! ([`LowRankMode::CovarianceSide`]). All inverses and determinants go
//! through the `n_v × n_v` capacitance matrix `C = V̂⁻¹ + Q̂ᵀQ̂ / a`, so no
//! `n × n` matrix is formed except by the explicit densifying helpers.

use crate::error::{check_len, Error, Result};
use crate::gaussian::DenseCovariance;
use crate::linalg::{self, Matrix};
use crate::scalar::{dot, norm_sq, Real};
use crate::sparse::residual;

/// Which matrix the triple parameterizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LowRankMode {
    PrecisionSide,
    CovarianceSide,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowRankPrecision<T> {
    q: Matrix<T>,
    log_v: Vec<T>,
    diag_a: T,
    mode: LowRankMode,
}

/// Gradient of the NLL with respect to `(Q̂, log V̂, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankGrad<T> {
    pub q: Matrix<T>,
    pub log_v: Vec<T>,
    pub diag_a: T,
}

/// Cached capacitance factor for a fixed triple with `a > 0`.
struct Capacitance<T> {
    /// `C⁻¹`
    inv: Matrix<T>,
    /// `Q̂ᵀQ̂`
    gram: Matrix<T>,
    logdet: T,
}

impl<T: Real> LowRankPrecision<T> {
    pub fn new(q: Matrix<T>, log_v: Vec<T>, diag_a: T, mode: LowRankMode) -> Result<Self> {
        check_len("log eigenvalues", q.cols(), log_v.len())?;
        if q.cols() > q.rows() {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds dimension {}",
                q.cols(),
                q.rows()
            )));
        }
        if !(diag_a >= T::zero()) || !diag_a.is_finite() {
            return Err(Error::InvalidConfig(format!("diagonal term must be ≥ 0, got {diag_a}")));
        }
        if log_v.iter().any(|v| !v.is_finite()) || q.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite low-rank parameters".into()));
        }
        Ok(Self {
            q,
            log_v,
            diag_a,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    pub fn rank(&self) -> usize {
        self.q.cols()
    }

    pub fn q(&self) -> &Matrix<T> {
        &self.q
    }

    pub fn log_v(&self) -> &[T] {
        &self.log_v
    }

    pub fn diag_a(&self) -> T {
        self.diag_a
    }

    pub fn mode(&self) -> LowRankMode {
        self.mode
    }

    fn eigenvalues(&self) -> Vec<T> {
        self.log_v.iter().map(|v| v.exp()).collect()
    }

    /// `‖Q̂ᵀQ̂ − I‖_F²`.
    pub fn ortho_penalty(&self) -> T {
        let mut g = self.q.gram_inner();
        for i in 0..self.rank() {
            g[(i, i)] -= T::one();
        }
        g.as_slice().iter().map(|&v| v * v).sum()
    }

    /// `∂/∂Q̂ ‖Q̂ᵀQ̂ − I‖_F² = 4 Q̂ (Q̂ᵀQ̂ − I)`.
    pub fn ortho_penalty_grad(&self) -> Matrix<T> {
        let mut g = self.q.gram_inner();
        for i in 0..self.rank() {
            g[(i, i)] -= T::one();
        }
        self.q.matmul(&g).expect("conformant").scale(T::lit(4.0))
    }

    /// `‖Q̂ᵀQ̂ − I‖_max`.
    pub fn ortho_defect(&self) -> T {
        self.q
            .gram_inner()
            .sub(&Matrix::identity(self.rank()))
            .expect("square")
            .max_abs()
    }

    /// Dense `Q̂ V̂ Q̂ᵀ + a I`.
    pub fn implied_dense(&self) -> Matrix<T> {
        let v = self.eigenvalues();
        let qv = Matrix::from_fn(self.dim(), self.rank(), |i, j| self.q[(i, j)] * v[j]);
        let mut m = qv.matmul(&self.q.transpose()).expect("conformant");
        for i in 0..self.dim() {
            m[(i, i)] += self.diag_a;
        }
        m.symmetrize();
        m
    }

    fn capacitance(&self) -> Result<Capacitance<T>> {
        if !(self.diag_a > T::zero()) {
            return Err(Error::Singular("capacitance requires a > 0"));
        }
        let gram = self.q.gram_inner();
        let mut c = gram.scale(T::one() / self.diag_a);
        for (j, lv) in self.log_v.iter().enumerate() {
            c[(j, j)] += (-*lv).exp();
        }
        let l = linalg::cholesky(&c).map_err(|_| Error::Singular("capacitance matrix"))?;
        let logdet = T::lit(2.0) * l.diag().into_iter().map(|d| d.ln()).sum::<T>();
        let inv = linalg::inverse_from_cholesky(&l)?;
        Ok(Capacitance { inv, gram, logdet })
    }

    /// `log|Q̂ V̂ Q̂ᵀ + a I|` by the matrix-determinant lemma
    /// `n log a + Σ log v + log|C|`.
    fn logdet_implied(&self) -> Result<T> {
        if self.diag_a > T::zero() {
            let cap = self.capacitance()?;
            let n = T::lit(self.dim() as f64);
            return Ok(n * self.diag_a.ln() + self.log_v.iter().copied().sum::<T>() + cap.logdet);
        }
        if self.rank() < self.dim() {
            return Err(Error::Singular("a = 0 with rank below dimension"));
        }
        linalg::spd_logdet(&self.implied_dense()).map_err(|_| Error::Singular("implied matrix"))
    }

    /// `(Q̂ V̂ Q̂ᵀ + a I)⁻¹ x = x/a − Q̂ C⁻¹ Q̂ᵀ x / a²`.
    fn apply_inverse(&self, cap: &Capacitance<T>, x: &[T]) -> Vec<T> {
        let a = self.diag_a;
        let qtx = self.q.tr_matvec(x).expect("conformant");
        let t = cap.inv.matvec(&qtx).expect("conformant");
        let qt = self.q.matvec(&t).expect("conformant");
        let a2 = a * a;
        x.iter().zip(&qt).map(|(&xi, &yi)| xi / a - yi / a2).collect()
    }

    /// `(Q̂ V̂ Q̂ᵀ + a I)⁻¹ Q̂ = Q̂/a − Q̂ C⁻¹ (Q̂ᵀQ̂) / a²`.
    fn inverse_times_q(&self, cap: &Capacitance<T>) -> Matrix<T> {
        let a = self.diag_a;
        let inner = cap.inv.matmul(&cap.gram).expect("conformant");
        let corr = self.q.matmul(&inner).expect("conformant");
        let a2 = a * a;
        Matrix::from_fn(self.dim(), self.rank(), |i, j| {
            self.q[(i, j)] / a - corr[(i, j)] / a2
        })
    }

    /// `tr((Q̂ V̂ Q̂ᵀ + a I)⁻¹) = n/a − tr(C⁻¹ Q̂ᵀQ̂)/a²`.
    fn inverse_trace(&self, cap: &Capacitance<T>) -> T {
        let a = self.diag_a;
        let mut t = T::zero();
        for i in 0..self.rank() {
            t += dot(cap.inv.row(i), &cap.gram.column(i));
        }
        T::lit(self.dim() as f64) / a - t / (a * a)
    }

    /// Dense inverse of the implied matrix via the Woodbury identity.
    pub fn woodbury_inverse(&self) -> Result<DenseCovariance<T>> {
        let cap = self.capacitance()?;
        let a = self.diag_a;
        let n = self.dim();
        let qc = self.q.matmul(&cap.inv)?;
        let mut out = qc.matmul(&self.q.transpose())?.scale(-T::one() / (a * a));
        for i in 0..n {
            out[(i, i)] += T::one() / a;
        }
        out.symmetrize();
        DenseCovariance::new(out)
    }

    /// Log-determinant of the implied covariance `Σ̂`.
    pub fn logdet_cov(&self) -> Result<T> {
        let ld = self.logdet_implied()?;
        Ok(match self.mode {
            LowRankMode::PrecisionSide => -ld,
            LowRankMode::CovarianceSide => ld,
        })
    }

    /// `log|Σ̂| + rᵀ Λ̂ r`.
    pub fn nll(&self, mean: &[T], x: &[T]) -> Result<T> {
        let r = residual(self.dim(), mean, x)?;
        match self.mode {
            LowRankMode::PrecisionSide => {
                let v = self.eigenvalues();
                let qtr = self.q.tr_matvec(&r)?;
                let quad = qtr.iter().zip(&v).map(|(&p, &vj)| vj * p * p).sum::<T>()
                    + self.diag_a * norm_sq(&r);
                Ok(self.logdet_cov()? + quad)
            }
            LowRankMode::CovarianceSide => {
                if !(self.diag_a > T::zero()) {
                    return Err(Error::Singular("covariance-side NLL requires a > 0"));
                }
                let cap = self.capacitance()?;
                let w = self.apply_inverse(&cap, &r);
                let n = T::lit(self.dim() as f64);
                let logdet =
                    n * self.diag_a.ln() + self.log_v.iter().copied().sum::<T>() + cap.logdet;
                Ok(logdet + dot(&r, &w))
            }
        }
    }

    /// NLL with its exact gradient. Requires `a > 0` in both modes.
    pub fn nll_and_grad(&self, mean: &[T], x: &[T]) -> Result<(T, LowRankGrad<T>)> {
        let r = residual(self.dim(), mean, x)?;
        let cap = self.capacitance()?;
        let v = self.eigenvalues();
        let n = self.dim();
        let k = self.rank();
        let a = self.diag_a;
        let two = T::lit(2.0);
        let logdet_implied =
            T::lit(n as f64) * a.ln() + self.log_v.iter().copied().sum::<T>() + cap.logdet;
        let sq = self.inverse_times_q(&cap);
        let tr_s = self.inverse_trace(&cap);
        let qt_sq: Vec<T> = (0..k)
            .map(|j| {
                (0..n)
                    .map(|i| self.q[(i, j)] * sq[(i, j)])
                    .sum::<T>()
            })
            .collect();

        // sign = +1 for covariance side, −1 for precision side
        let (nll, probe, sign) = match self.mode {
            LowRankMode::PrecisionSide => {
                let qtr = self.q.tr_matvec(&r)?;
                let quad = qtr.iter().zip(&v).map(|(&p, &vj)| vj * p * p).sum::<T>()
                    + a * norm_sq(&r);
                (-logdet_implied + quad, r, -T::one())
            }
            LowRankMode::CovarianceSide => {
                let w = self.apply_inverse(&cap, &r);
                (logdet_implied + dot(&r, &w), w, T::one())
            }
        };
        // precision side: ∂ = −S + r rᵀ ; covariance side: ∂ = S − w wᵀ
        let qtp = self.q.tr_matvec(&probe)?;
        let gq = Matrix::from_fn(n, k, |i, j| {
            two * v[j] * (sign * sq[(i, j)] - sign * probe[i] * qtp[j])
        });
        let g_log_v = (0..k)
            .map(|j| v[j] * (sign * qt_sq[j] - sign * qtp[j] * qtp[j]))
            .collect();
        let g_a = sign * tr_s - sign * norm_sq(&probe);
        Ok((
            nll,
            LowRankGrad {
                q: gq,
                log_v: g_log_v,
                diag_a: g_a,
            },
        ))
    }

    /// `μ + M̂ u` with `M̂` the symmetric root of `Σ̂` (exact when `Q̂` is
    /// orthonormal). With `a = 0` this is the pseudo-root, so samples lie in
    /// the span of `Q̂`.
    pub fn sample(&self, mean: &[T], u: &[T]) -> Result<Vec<T>> {
        check_len("mean", self.dim(), mean.len())?;
        check_len("noise vector", self.dim(), u.len())?;
        let (iso, spectral) = self.root_spectrum();
        let qtu = self.q.tr_matvec(u)?;
        let scaled: Vec<T> = qtu.iter().zip(&spectral).map(|(&p, &s)| p * s).collect();
        let low = self.q.matvec(&scaled)?;
        Ok((0..self.dim())
            .map(|i| mean[i] + iso * u[i] + low[i])
            .collect())
    }

    /// `M̂ = iso·I + Q̂ diag(spectral) Q̂ᵀ`.
    fn root_spectrum(&self) -> (T, Vec<T>) {
        let a = self.diag_a;
        let v = self.eigenvalues();
        let zero_a = !(a > T::zero());
        match self.mode {
            LowRankMode::PrecisionSide if zero_a => {
                (T::zero(), v.iter().map(|&x| x.sqrt().recip()).collect())
            }
            LowRankMode::PrecisionSide => {
                let iso = a.sqrt().recip();
                (iso, v.iter().map(|&x| (x + a).sqrt().recip() - iso).collect())
            }
            LowRankMode::CovarianceSide if zero_a => {
                (T::zero(), v.iter().map(|&x| x.sqrt()).collect())
            }
            LowRankMode::CovarianceSide => {
                let iso = a.sqrt();
                (iso, v.iter().map(|&x| (x + a).sqrt() - iso).collect())
            }
        }
    }

    /// Dense `M̂` used by [`sample`](Self::sample).
    pub fn sample_root(&self) -> Matrix<T> {
        let (iso, spectral) = self.root_spectrum();
        let qs = Matrix::from_fn(self.dim(), self.rank(), |i, j| self.q[(i, j)] * spectral[j]);
        let mut m = qs.matmul(&self.q.transpose()).expect("conformant");
        for i in 0..self.dim() {
            m[(i, i)] += iso;
        }
        m
    }

    /// Dense precision `Λ̂` (inverts through Woodbury on the covariance side).
    pub fn precision_dense(&self) -> Result<Matrix<T>> {
        match self.mode {
            LowRankMode::PrecisionSide => Ok(self.implied_dense()),
            LowRankMode::CovarianceSide => Ok(self.woodbury_inverse()?.into_matrix()),
        }
    }

    /// Dense covariance `Σ̂`.
    pub fn covariance_dense(&self) -> Result<DenseCovariance<T>> {
        match self.mode {
            LowRankMode::PrecisionSide => self.woodbury_inverse(),
            LowRankMode::CovarianceSide => DenseCovariance::new(self.implied_dense()),
        }
    }
}

pub fn ortho_penalty<T: Real>(lr: &LowRankPrecision<T>) -> T {
    lr.ortho_penalty()
}

pub fn lr_logdet<T: Real>(lr: &LowRankPrecision<T>) -> Result<T> {
    lr.logdet_cov()
}

pub fn lr_nll<T: Real>(lr: &LowRankPrecision<T>, mean: &[T], x: &[T]) -> Result<T> {
    lr.nll(mean, x)
}

pub fn lr_sample<T: Real>(lr: &LowRankPrecision<T>, mean: &[T], u: &[T]) -> Result<Vec<T>> {
    lr.sample(mean, u)
}

pub fn woodbury_inverse<T: Real>(lr: &LowRankPrecision<T>) -> Result<DenseCovariance<T>> {
    lr.woodbury_inverse()
}
