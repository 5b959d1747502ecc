//! Eigen-projection denoising: keep only the part of a residual that lies
//! in the leading eigenspace of the predicted covariance.

use std::io::Write;

use crate::eigen::EigenPairs;
use crate::error::{check_len, Error, Result};
use crate::estimator::CondRegressor;
use crate::gaussian::{sym_eigen, DenseCovariance};
use crate::metrics::Stat;
use crate::scalar::Real;
use crate::synthdata::LinearReconstructor;

#[derive(Clone, Debug)]
pub struct DenoiseResult<T> {
    pub reconstruction: Vec<T>,
    pub residual: Vec<T>,
    pub projected: Vec<T>,
    pub output: Vec<T>,
    pub k_used: usize,
}

/// `U_k U_kᵀ s` for the `k` leading eigenvectors of an existing
/// decomposition.
pub fn project_onto_leading<T: Real>(eig: &EigenPairs<T>, s: &[T], k: usize) -> Result<Vec<T>> {
    let n = eig.dim();
    check_len("residual", n, s.len())?;
    if k == 0 || k > n {
        return Err(Error::OutOfRange {
            what: "eigenvector count",
            value: k as f64,
            lo: 1.0,
            hi: n as f64,
        });
    }
    let u = eig.leading(k);
    u.matvec(&u.tr_matvec(s)?)
}

/// `U_k U_kᵀ s` with `U_k` the eigenvectors of the `k` largest eigenvalues
/// of `sigma`. Ties at the cut keep the lower original index.
pub fn eigen_project<T: Real>(sigma: &DenseCovariance<T>, s: &[T], k: usize) -> Result<Vec<T>> {
    check_len("residual", sigma.dim(), s.len())?;
    project_onto_leading(&sym_eigen(sigma)?, s, k)
}

/// Reconstructs `x_noisy`, predicts a covariance from the reconstructor
/// code, and adds the eigen-projected residual back onto the
/// reconstruction.
pub fn denoise<T: Real>(
    x_noisy: &[T],
    reconstructor: &LinearReconstructor<T>,
    reg: &CondRegressor<T>,
    k: usize,
) -> Result<DenoiseResult<T>> {
    check_len("noisy image", reconstructor.dim(), x_noisy.len())?;
    check_len("regressor dimension", reconstructor.dim(), reg.head().dim())?;
    let code = reconstructor.code(x_noisy)?;
    let reconstruction = reconstructor.decode(&code)?;
    let sigma = reg.predict_gaussian(&code, &reconstruction)?.covariance()?;
    let residual: Vec<T> = x_noisy.iter().zip(&reconstruction).map(|(&a, &b)| a - b).collect();
    let projected = eigen_project(&sigma, &residual, k)?;
    let output = reconstruction.iter().zip(&projected).map(|(&a, &b)| a + b).collect();
    Ok(DenoiseResult {
        reconstruction,
        residual,
        projected,
        output,
        k_used: k,
    })
}

/// Mean squared error between two equally long vectors.
pub fn mse<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    check_len("MSE operand", a.len(), b.len())?;
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).to_f64_lossy().powi(2))
        .sum();
    Ok(s / a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenoiseRow {
    pub record_id: usize,
    pub mse_noisy: f64,
    pub mse_denoised: f64,
}

pub const DENOISE_CSV_HEADER: &str = "record_id,mse_noisy,mse_denoised";

/// Per-image errors followed by a `mean` row (`mean ± std` cells).
pub fn write_denoise_csv<W: Write>(mut w: W, rows: &[DenoiseRow]) -> Result<()> {
    writeln!(w, "{DENOISE_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{:.17e},{:.17e}", r.record_id, r.mse_noisy, r.mse_denoised)?;
    }
    let noisy: Vec<f64> = rows.iter().map(|r| r.mse_noisy).collect();
    let den: Vec<f64> = rows.iter().map(|r| r.mse_denoised).collect();
    let fmt = |v: &[f64]| {
        let s = Stat::of(v);
        format!("{:.3e} ± {:.3e}", s.mean, s.std)
    };
    writeln!(w, "mean,{},{}", fmt(&noisy), fmt(&den))?;
    Ok(())
}
