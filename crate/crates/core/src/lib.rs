//! Structured full-covariance Gaussian models for reconstruction residuals.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`], [`eigen`], [`gaussian`]: dense reference primitives
//!   (Cholesky, triangular solves, Jacobi eigensolver, NLL, KL).
//! * [`sparse`]: band-sparse Cholesky precision factors over image grids.
//! * [`lowrank`]: `Q̂ V̂ Q̂ᵀ + a I` models with Woodbury inversion.
//! * [`estimator`]: a feed-forward regressor that predicts factor
//!   parameters from a conditioning vector, trained by maximum likelihood.
//! * [`synthdata`]: spline and ellipse datasets with known covariances, and
//!   a linear principal-subspace reconstructor.
//! * [`denoise`]: eigen-projection denoising of reconstruction residuals.
//! * [`metrics`]: evaluation rows and their CSV form.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the experiments use.

pub mod denoise;
pub mod eigen;
pub mod error;
pub mod estimator;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod lowrank;
pub mod metrics;
pub mod scalar;
pub mod sparse;
pub mod synthdata;

pub use error::{Error, Result};
pub use scalar::Real;

pub use eigen::EigenPairs;
pub use gaussian::{DenseCovariance, DenseGaussian};
pub use linalg::Matrix;
pub use lowrank::{LowRankMode, LowRankPrecision};
pub use sparse::{GridShape, NeighborhoodPattern, SparseCholesky};
pub use estimator::{CondRegressor, FitReport, Head, TrainConfig, TrainRecord};
pub use synthdata::{EllipseConfig, LinearReconstructor, SplineConfig, SynthRecord};
pub use denoise::DenoiseResult;

pub type Matrix64 = Matrix<f64>;
pub type DenseGaussian64 = DenseGaussian<f64>;
pub type DenseCovariance64 = DenseCovariance<f64>;
pub type EigenPairs64 = EigenPairs<f64>;
pub type SparseCholesky64 = SparseCholesky<f64>;
pub type LowRankPrecision64 = LowRankPrecision<f64>;
pub type CondRegressor64 = CondRegressor<f64>;
pub type TrainRecord64 = TrainRecord<f64>;
pub type SynthRecord64 = SynthRecord<f64>;
pub type LinearReconstructor64 = LinearReconstructor<f64>;
