//! Band-sparse Cholesky factors of image-grid precision matrices.
//!
//! Pixel `j` may couple to pixel `i` in `L` only if `j ≤ i` in raster order
//! and `j` lies inside the `f × f` patch centred on `i` (Chebyshev distance,
//! no wraparound). The implied precision `Λ = L Lᵀ` is a Gaussian Markov
//! random field whose neighbourhoods are unions of overlapping patches.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::gaussian::DenseGaussian;
use crate::io::{read_f64s, read_magic, read_u32, write_f64s, write_u32};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Largest dimension [`SparseCholesky::to_dense`] will materialize.
pub const MAX_DENSE_DIM: usize = 4096;

const SCHL_MAGIC: &[u8; 4] = b"SCHL";

/// Image grid; 1-D signals use `width = 1, height = n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig(format!(
                "grid must be non-empty, got {height}×{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn signal(n: usize) -> Result<Self> {
        Self::new(n, 1)
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of raster index `i`.
    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i / self.width, i % self.width)
    }

    /// True if pixel `j` lies in the `f × f` patch centred on pixel `i`.
    pub fn in_patch(&self, i: usize, j: usize, f: usize) -> bool {
        let half = f / 2;
        let (ri, ci) = self.coords(i);
        let (rj, cj) = self.coords(j);
        ri.abs_diff(rj) <= half && ci.abs_diff(cj) <= half
    }
}

/// Fixed sparsity structure of `L`.
///
/// Each row stores its strictly-lower column indices in ascending order;
/// the diagonal is implicit and always present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodPattern {
    shape: GridShape,
    patch: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl NeighborhoodPattern {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Stored strictly-lower entries.
    pub fn off_diag_count(&self) -> usize {
        self.cols.len()
    }

    /// All stored entries including the diagonal.
    pub fn entry_count(&self) -> usize {
        self.dim() + self.cols.len()
    }

    /// Upper bound `n((f² − 1)/2 + 1)` attained by an unbounded grid.
    pub fn entry_bound(&self) -> usize {
        self.dim() * ((self.patch * self.patch - 1) / 2 + 1)
    }

    /// Strictly-lower column indices of row `i`.
    #[inline]
    pub fn row_off_diag(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Offset range of row `i` into the off-diagonal value array.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Sorted column indices of row `i`, diagonal included.
    pub fn row_entries(&self, i: usize) -> Vec<usize> {
        let mut v = self.row_off_diag(i).to_vec();
        v.push(i);
        v
    }

    /// `(row, col)` of every stored strictly-lower entry, in storage order.
    pub fn off_diag_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim()).flat_map(move |i| self.row_off_diag(i).iter().map(move |&j| (i, j)))
    }
}

/// Pattern for a grid and odd patch width `f`.
pub fn build_pattern(shape: GridShape, f: usize) -> Result<NeighborhoodPattern> {
    if f == 0 || f % 2 == 0 {
        return Err(Error::InvalidPatch(f));
    }
    let max_f = 2 * shape.height.max(shape.width) - 1;
    if f > max_f {
        return Err(Error::OutOfRange {
            what: "patch width",
            value: f as f64,
            lo: 1.0,
            hi: max_f as f64,
        });
    }
    let half = (f / 2) as isize;
    let (h, w) = (shape.height as isize, shape.width as isize);
    let mut row_ptr = Vec::with_capacity(shape.len() + 1);
    let mut cols = Vec::new();
    row_ptr.push(0);
    for i in 0..shape.len() {
        let (r, c) = shape.coords(i);
        let (r, c) = (r as isize, c as isize);
        for dr in -half..=0 {
            let rr = r + dr;
            if rr < 0 {
                continue;
            }
            for dc in -half..=half {
                let cc = c + dc;
                if cc < 0 || cc >= w || (dr == 0 && dc >= 0) {
                    continue;
                }
                debug_assert!(rr < h);
                cols.push((rr * w + cc) as usize);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(NeighborhoodPattern {
        shape,
        patch: f,
        row_ptr,
        cols,
    })
}

/// Largest `|i − j|` over the nonzeros of `Λ = L Lᵀ` implied by the pattern.
///
/// `Λ_ab ≠ 0` requires rows `a` and `b` of `L` to share a column `k`; every
/// column `k` is shared by row `k` itself, so the answer is the longest
/// reach of any column below its diagonal.
pub fn precision_bandwidth(p: &NeighborhoodPattern) -> usize {
    let mut lowest_row = (0..p.dim()).collect::<Vec<_>>();
    for (i, j) in p.off_diag_positions() {
        lowest_row[j] = lowest_row[j].max(i);
    }
    lowest_row
        .iter()
        .enumerate()
        .map(|(k, &r)| r - k)
        .max()
        .unwrap_or(0)
}

/// Nonzero values of `L` over a shared pattern; the diagonal is stored as
/// `log(l_ii)` so any finite parameter vector gives a valid factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCholesky<T> {
    pattern: Arc<NeighborhoodPattern>,
    off_diag: Vec<T>,
    log_diag: Vec<T>,
}

/// Gradient of [`SparseCholesky::nll`] with respect to the stored parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGrad<T> {
    pub off_diag: Vec<T>,
    pub log_diag: Vec<T>,
}

impl<T: Real> SparseCholesky<T> {
    pub fn new(pattern: Arc<NeighborhoodPattern>, off_diag: Vec<T>, log_diag: Vec<T>) -> Result<Self> {
        check_len("off-diagonal values", pattern.off_diag_count(), off_diag.len())?;
        check_len("log-diagonal values", pattern.dim(), log_diag.len())?;
        if let Some(i) = log_diag.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFactor {
                index: i,
                value: log_diag[i].to_f64_lossy(),
            });
        }
        Ok(Self {
            pattern,
            off_diag,
            log_diag,
        })
    }

    pub fn identity(pattern: Arc<NeighborhoodPattern>) -> Self {
        let (m, n) = (pattern.off_diag_count(), pattern.dim());
        Self {
            pattern,
            off_diag: vec![T::zero(); m],
            log_diag: vec![T::zero(); n],
        }
    }

    /// Reads the stored values of `pattern` out of a dense lower factor.
    pub fn from_dense(pattern: Arc<NeighborhoodPattern>, dense: &Matrix<T>) -> Result<Self> {
        let n = pattern.dim();
        check_len("dense factor rows", n, dense.rows())?;
        check_len("dense factor cols", n, dense.cols())?;
        let off_diag = pattern.off_diag_positions().map(|(i, j)| dense[(i, j)]).collect();
        let log_diag = (0..n).map(|i| dense[(i, i)].ln()).collect();
        Self::new(pattern, off_diag, log_diag)
    }

    pub fn pattern(&self) -> &Arc<NeighborhoodPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn off_diag(&self) -> &[T] {
        &self.off_diag
    }

    pub fn log_diag(&self) -> &[T] {
        &self.log_diag
    }

    /// `y = Lᵀ r`, touching only stored entries.
    pub fn whiten(&self, r: &[T]) -> Vec<T> {
        let p = &*self.pattern;
        let mut y: Vec<T> = r
            .iter()
            .zip(&self.log_diag)
            .map(|(&ri, &ld)| ri * ld.exp())
            .collect();
        for (i, &ri) in r.iter().enumerate() {
            if ri == T::zero() {
                continue;
            }
            let range = p.row_range(i);
            for (&j, &v) in p.cols[range.clone()].iter().zip(&self.off_diag[range]) {
                y[j] += v * ri;
            }
        }
        y
    }

    /// `log|Σ| = −2 Σ log l_ii`.
    pub fn logdet_cov(&self) -> T {
        -T::lit(2.0) * self.log_diag.iter().copied().sum::<T>()
    }

    /// `‖Lᵀ(x − μ)‖² − 2 Σ log l_ii`.
    pub fn nll(&self, mean: &[T], x: &[T]) -> Result<T> {
        let r = residual(self.dim(), mean, x)?;
        let y = self.whiten(&r);
        Ok(crate::scalar::norm_sq(&y) + self.logdet_cov())
    }

    /// NLL and its exact gradient in one pass:
    /// `∂/∂L_ij = 2 r_i y_j`, `∂/∂log l_ii = 2 r_i y_i l_ii − 2`.
    pub fn nll_and_grad(&self, mean: &[T], x: &[T]) -> Result<(T, SparseGrad<T>)> {
        let r = residual(self.dim(), mean, x)?;
        let y = self.whiten(&r);
        let nll = crate::scalar::norm_sq(&y) + self.logdet_cov();
        let two = T::lit(2.0);
        let p = &*self.pattern;
        let mut off = vec![T::zero(); p.off_diag_count()];
        for (i, &ri) in r.iter().enumerate() {
            let range = p.row_range(i);
            for (g, &j) in off[range.clone()].iter_mut().zip(&p.cols[range]) {
                *g = two * ri * y[j];
            }
        }
        let log_diag = (0..self.dim())
            .map(|i| two * r[i] * y[i] * self.log_diag[i].exp() - two)
            .collect();
        Ok((
            nll,
            SparseGrad {
                off_diag: off,
                log_diag,
            },
        ))
    }

    /// `μ + y` with `Lᵀ y = u`, by backward substitution over stored entries.
    pub fn sample(&self, mean: &[T], u: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        check_len("mean", n, mean.len())?;
        check_len("noise vector", n, u.len())?;
        let p = &*self.pattern;
        let mut acc = u.to_vec();
        for i in (0..n).rev() {
            let yi = acc[i] / self.log_diag[i].exp();
            acc[i] = yi;
            let range = p.row_range(i);
            for (&j, &v) in p.cols[range.clone()].iter().zip(&self.off_diag[range]) {
                acc[j] -= v * yi;
            }
        }
        Ok(acc.iter().zip(mean).map(|(&a, &b)| a + b).collect())
    }

    /// Dense lower-triangular `L`.
    pub fn to_dense(&self) -> Result<Matrix<T>> {
        let n = self.dim();
        if n > MAX_DENSE_DIM {
            return Err(Error::OutOfRange {
                what: "dense dimension",
                value: n as f64,
                lo: 1.0,
                hi: MAX_DENSE_DIM as f64,
            });
        }
        let mut l = Matrix::zeros(n, n);
        for ((i, j), &v) in self.pattern.off_diag_positions().zip(&self.off_diag) {
            l[(i, j)] = v;
        }
        for (i, &ld) in self.log_diag.iter().enumerate() {
            l[(i, i)] = ld.exp();
        }
        Ok(l)
    }

    pub fn to_dense_gaussian(&self, mean: Vec<T>) -> Result<DenseGaussian<T>> {
        DenseGaussian::new(mean, self.to_dense()?)
    }

    /// Little-endian `SCHL` record: magic, height, width, f, log-diagonal,
    /// off-diagonal. The pattern is rebuilt on read.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let shape = self.pattern.shape();
        w.write_all(SCHL_MAGIC)?;
        write_u32(&mut w, shape.height)?;
        write_u32(&mut w, shape.width)?;
        write_u32(&mut w, self.pattern.patch())?;
        write_f64s(&mut w, &self.log_diag)?;
        write_f64s(&mut w, &self.off_diag)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        read_magic(&mut r, SCHL_MAGIC, "SCHL")?;
        let height = read_u32(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        let f = read_u32(&mut r)? as usize;
        let pattern = Arc::new(build_pattern(GridShape::new(height, width)?, f)?);
        let log_diag = read_f64s(&mut r, pattern.dim())?;
        let off_diag = read_f64s(&mut r, pattern.off_diag_count())?;
        Self::new(pattern, off_diag, log_diag)
    }
}

pub(crate) fn residual<T: Real>(n: usize, mean: &[T], x: &[T]) -> Result<Vec<T>> {
    check_len("mean", n, mean.len())?;
    check_len("observation", n, x.len())?;
    Ok(x.iter().zip(mean).map(|(&a, &b)| a - b).collect())
}

/// Convenience wrapper matching the dense API.
pub fn nll_sparse<T: Real>(sc: &SparseCholesky<T>, mean: &[T], x: &[T]) -> Result<T> {
    sc.nll(mean, x)
}

pub fn sample_sparse<T: Real>(sc: &SparseCholesky<T>, mean: &[T], u: &[T]) -> Result<Vec<T>> {
    sc.sample(mean, u)
}

pub fn to_dense<T: Real>(sc: &SparseCholesky<T>) -> Result<Matrix<T>> {
    sc.to_dense()
}
