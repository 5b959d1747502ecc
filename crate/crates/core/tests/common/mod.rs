#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use structcov::estimator::{CondRegressor, Head};
use structcov::linalg::Matrix;
use structcov::sparse::build_pattern;
use structcov::{GridShape, LowRankMode, LowRankPrecision, SparseCholesky};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniforms(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Off-diagonals `N(0, off_sd²)`, log-diagonal `N(0, log_sd²)`.
pub fn random_sparse(
    rng: &mut impl Rng,
    shape: GridShape,
    f: usize,
    off_sd: f64,
    log_sd: f64,
) -> SparseCholesky<f64> {
    let p = Arc::new(build_pattern(shape, f).unwrap());
    let off = Normal::new(0.0, off_sd).unwrap();
    let ld = Normal::new(0.0, log_sd).unwrap();
    let off_diag = (0..p.off_diag_count()).map(|_| off.sample(rng)).collect();
    let log_diag = (0..p.dim()).map(|_| ld.sample(rng)).collect();
    SparseCholesky::new(p, off_diag, log_diag).unwrap()
}

/// Modified Gram–Schmidt on the columns of `a`.
pub fn gram_schmidt(a: &Matrix<f64>) -> Matrix<f64> {
    let (n, k) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    for j in 0..k {
        for i in 0..j {
            let d: f64 = (0..n).map(|r| cols[i][r] * cols[j][r]).sum();
            for r in 0..n {
                cols[j][r] -= d * cols[i][r];
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    Matrix::from_fn(n, k, |r, c| cols[c][r])
}

pub fn random_lowrank(
    rng: &mut impl Rng,
    n: usize,
    k: usize,
    a: f64,
    mode: LowRankMode,
    orthonormal: bool,
) -> LowRankPrecision<f64> {
    let q = Matrix::from_vec(n, k, normals(rng, n * k)).unwrap();
    let q = if orthonormal {
        gram_schmidt(&q)
    } else {
        q.scale(1.0 / (n as f64).sqrt())
    };
    let log_v = uniforms(rng, k, -1.0, 1.0);
    LowRankPrecision::new(q, log_v, a, mode).unwrap()
}

/// `max |a − b| / max(1, max |b|)`.
pub fn rel_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// `‖A − B‖_F / ‖B‖_F`.
pub fn rel_frobenius(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

/// `(1/N) Σ y yᵀ` over zero-mean draws produced by `draw`.
pub fn empirical_covariance(n: usize, count: usize, mut draw: impl FnMut() -> Vec<f64>) -> Matrix<f64> {
    let mut acc = vec![0.0; n * n];
    for _ in 0..count {
        let y = draw();
        for i in 0..n {
            let yi = y[i];
            let row = &mut acc[i * n..i * n + i + 1];
            for (c, &yj) in row.iter_mut().zip(&y[..=i]) {
                *c += yi * yj;
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| {
        let (a, b) = if j <= i { (i, j) } else { (j, i) };
        acc[a * n + b] / count as f64
    })
}

/// Summary of a central finite-difference comparison.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn grad_rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn relu_mask(reg: &CondRegressor<f64>, c: &[f64]) -> Vec<bool> {
    let t = reg.forward_trace(c).unwrap();
    t.pre.iter().flatten().map(|&v| v > 0.0).collect()
}

fn end_to_end_loss(reg: &CondRegressor<f64>, c: &[f64], mean: &[f64], x: &[f64], ortho: f64) -> f64 {
    let out = reg.forward(c).unwrap();
    reg.head().loss_and_grad(&out, mean, x, ortho).unwrap().loss
}

/// Compares analytic weight/bias gradients of the full per-record loss with
/// central differences on `coords` random coordinates. Coordinates whose
/// perturbation flips a rectifier are skipped.
pub fn check_regressor_gradients(
    rng: &mut impl Rng,
    reg: &CondRegressor<f64>,
    c: &[f64],
    mean: &[f64],
    x: &[f64],
    ortho: f64,
    coords: usize,
    step: f64,
    floor: f64,
) -> GradCheck {
    let trace = reg.forward_trace(c).unwrap();
    let hl = reg.head().loss_and_grad(&trace.output, mean, x, ortho).unwrap();
    let grads = reg.backward(c, &hl.grad).unwrap();
    let base_mask = relu_mask(reg, c);
    let mut out = GradCheck::default();
    for _ in 0..coords {
        let k = rng.random_range(0..reg.layers().len());
        let layer = &reg.layers()[k];
        let n_w = layer.weights.as_slice().len();
        let idx = rng.random_range(0..n_w + layer.bias.len());
        let analytic = if idx < n_w {
            grads[k].weights.as_slice()[idx]
        } else {
            grads[k].bias[idx - n_w]
        };
        let eval = |delta: f64| {
            let mut r = reg.clone();
            let l = &mut r.layers_mut()[k];
            if idx < n_w {
                l.weights.as_mut_slice()[idx] += delta;
            } else {
                l.bias[idx - n_w] += delta;
            }
            (relu_mask(&r, c), end_to_end_loss(&r, c, mean, x, ortho))
        };
        let (mp, fp) = eval(step);
        let (mm, fm) = eval(-step);
        if mp != base_mask || mm != base_mask {
            out.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        out.worst = out.worst.max(grad_rel_err(analytic, numeric, floor));
        out.checked += 1;
    }
    out
}

/// Regressor whose weights are scaled so that head parameters vary
/// noticeably with the input.
pub fn random_regressor(input: usize, hidden: &[usize], head: Head, seed: u64, gain: f64) -> CondRegressor<f64> {
    let mut reg = CondRegressor::new(input, hidden, head, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for l in reg.layers_mut() {
        l.weights.as_mut_slice().iter_mut().for_each(|w| *w *= gain);
        l.bias.iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
    }
    reg
}

pub fn square(side: usize) -> GridShape {
    GridShape::square(side).unwrap()
}

pub fn mode_of(i: usize) -> LowRankMode {
    if i % 2 == 0 {
        LowRankMode::PrecisionSide
    } else {
        LowRankMode::CovarianceSide
    }
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix<f64>) -> Matrix<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                let pivot_row = m[col].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, &pv)| *v -= factor * pv);
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| m[i][n + j])
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(a: &Matrix<f64>) -> f64 {
    let n = a.rows();
    if n == 1 {
        return a[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = Matrix::from_fn(n - 1, n - 1, |r, c| a[(r + 1, if c < j { c } else { c + 1 })]);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * a[(0, j)] * cofactor_det(&minor)
        })
        .sum()
}

/// Random lower-triangular factor with diagonal in `[0.5, 1.5]`.
pub fn random_factor(rng: &mut impl Rng, n: usize) -> Matrix<f64> {
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(0.5..1.5)
        } else if j < i {
            rng.random_range(-0.5..0.5)
        } else {
            0.0
        }
    })
}

/// Random symmetric positive definite matrix `B Bᵀ + n I / 2`.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> Matrix<f64> {
    let b = Matrix::from_vec(n, n, normals(rng, n * n)).unwrap();
    b.gram_outer().add(&Matrix::identity(n).scale(n as f64 / 2.0)).unwrap()
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Matrix<f64> {
    let b = Matrix::from_vec(n, n, normals(rng, n * n)).unwrap();
    b.add(&b.transpose()).unwrap().scale(0.5)
}
