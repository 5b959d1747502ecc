//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Off-diagonal Frobenius norm, relative to the input's Frobenius norm,
/// below which the iteration stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Full spectral decomposition `A = U diag(λ) Uᵀ`.
///
/// Eigenvalues are in descending order; column `j` of `vectors` belongs to
/// `values[j]`. Equal eigenvalues keep the order in which the solver
/// produced them (ascending diagonal position).
#[derive(Clone, Debug)]
pub struct EigenPairs<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> EigenPairs<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        let scaled = Matrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.values[j]);
        scaled.matmul(&self.vectors.transpose()).expect("square")
    }

    /// `‖UᵀU − I‖_max`.
    pub fn orthonormality_defect(&self) -> T {
        let g = self.vectors.gram_inner();
        g.sub(&Matrix::identity(self.dim())).expect("square").max_abs()
    }

    /// Columns of the `k` leading eigenvectors as an `n × k` matrix.
    pub fn leading(&self, k: usize) -> Matrix<T> {
        Matrix::from_fn(self.vectors.rows(), k, |i, j| self.vectors[(i, j)])
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is replaced by `(A + Aᵀ)/2` before iterating.
pub fn jacobi_eigen<T: Real>(
    a: &Matrix<T>,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<EigenPairs<T>> {
    check_len("eigensolver (square)", a.rows(), a.cols())?;
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    // rows of `vt` are eigenvectors
    let mut vt = Matrix::identity(n);

    let scale = m.frobenius_norm();
    let target = T::lit(tolerance) * scale;
    let mut sweeps = 0;
    let mut row_p = vec![T::zero(); n];
    let mut row_q = vec![T::zero(); n];

    while scale > T::zero() {
        let off = off_diagonal_norm(&m);
        if off <= target {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence {
                sweeps,
                off_norm: off.to_f64_lossy(),
            });
        }
        sweeps += 1;

        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // negligible against both diagonal entries: drop it
                if apq.abs() <= T::epsilon() * T::lit(0.5) * (app.abs().min(aqq.abs())) {
                    m[(p, q)] = T::zero();
                    m[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = {
                    let mag = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -mag
                    } else {
                        mag
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                row_p.copy_from_slice(m.row(p));
                row_q.copy_from_slice(m.row(q));
                for k in 0..n {
                    let kp = row_p[k];
                    let kq = row_q[k];
                    row_p[k] = c * kp - s * kq;
                    row_q[k] = s * kp + c * kq;
                }
                row_p[p] = app - t * apq;
                row_q[q] = aqq + t * apq;
                row_p[q] = T::zero();
                row_q[p] = T::zero();
                m.row_mut(p).copy_from_slice(&row_p);
                m.row_mut(q).copy_from_slice(&row_q);
                for k in 0..n {
                    m[(k, p)] = row_p[k];
                    m[(k, q)] = row_q[k];
                }

                for k in 0..n {
                    let vp = vt[(p, k)];
                    let vq = vt[(q, k)];
                    vt[(p, k)] = c * vp - s * vq;
                    vt[(q, k)] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep ascending index
    order.sort_by(|&i, &j| {
        m[(j, j)]
            .partial_cmp(&m[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |row, col| vt[(order[col], row)]);
    Ok(EigenPairs { values, vectors })
}

fn off_diagonal_norm<T: Real>(m: &Matrix<T>) -> T {
    let mut s = T::zero();
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s.sqrt()
}
