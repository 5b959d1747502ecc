//! Amortized covariance estimation: a small ReLU network maps a
//! conditioning vector to the parameters of a structured Gaussian and is
//! trained by maximum likelihood.

mod head;
mod regressor;
mod train;

pub use head::{Head, HeadLoss, Model, PredictedGaussian};
pub use regressor::{CondRegressor, Gradients, Layer, Trace};
pub use train::{evaluate, evaluate_ground_truth, fit, FitReport, TrainConfig, TrainRecord};

use crate::error::Result;
use crate::scalar::Real;
use crate::sparse::{SparseCholesky, SparseGrad};

/// Gradient of the sparse NLL with respect to the factor parameters.
pub fn nll_grad_wrt_params<T: Real>(
    sc: &SparseCholesky<T>,
    mean: &[T],
    x: &[T],
) -> Result<SparseGrad<T>> {
    Ok(sc.nll_and_grad(mean, x)?.1)
}
