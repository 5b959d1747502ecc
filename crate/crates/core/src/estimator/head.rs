use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::gaussian::{self, DenseCovariance, DenseGaussian};
use crate::linalg::{self, Matrix};
use crate::lowrank::{LowRankMode, LowRankPrecision};
use crate::scalar::Real;
use crate::sparse::{build_pattern, GridShape, NeighborhoodPattern, SparseCholesky};

/// How the regressor output is interpreted.
///
/// Output layouts:
/// * `Diagonal`, `SparseChol`: `[log l_11 … log l_nn, off-diagonals in pattern order]`
/// * `LowRank`: `[Q̂ row-major (n × n_v), log v̂ (n_v), log a]`
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Head {
    /// Independent per-pixel variances; the `f = 1` pattern.
    Diagonal { pattern: Arc<NeighborhoodPattern> },
    SparseChol { pattern: Arc<NeighborhoodPattern> },
    LowRank {
        n: usize,
        rank: usize,
        mode: LowRankMode,
    },
}

impl Head {
    pub fn diagonal(n: usize) -> Result<Self> {
        let pattern = build_pattern(GridShape::signal(n)?, 1)?;
        Ok(Self::Diagonal {
            pattern: Arc::new(pattern),
        })
    }

    pub fn sparse(shape: GridShape, f: usize) -> Result<Self> {
        Ok(Self::SparseChol {
            pattern: Arc::new(build_pattern(shape, f)?),
        })
    }

    /// Full lower triangle of an `n`-dimensional signal.
    pub fn dense_triangle(n: usize) -> Result<Self> {
        Self::sparse(GridShape::signal(n)?, 2 * n - 1)
    }

    pub fn low_rank(n: usize, rank: usize, mode: LowRankMode) -> Result<Self> {
        if rank > n || n == 0 {
            return Err(Error::InvalidConfig(format!("rank {rank} invalid for dimension {n}")));
        }
        Ok(Self::LowRank { n, rank, mode })
    }

    /// Dimension of the modelled vector.
    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal { pattern } | Self::SparseChol { pattern } => pattern.dim(),
            Self::LowRank { n, .. } => *n,
        }
    }

    /// Number of regressor outputs the head consumes.
    pub fn param_count(&self) -> usize {
        match self {
            Self::Diagonal { pattern } | Self::SparseChol { pattern } => pattern.entry_count(),
            Self::LowRank { n, rank, .. } => n * rank + rank + 1,
        }
    }

    fn check_output<T>(&self, out: &[T]) -> Result<()> {
        check_len("head parameters", self.param_count(), out.len())
    }

    pub fn sparse_factor<T: Real>(&self, out: &[T]) -> Result<Option<SparseCholesky<T>>> {
        self.check_output(out)?;
        match self {
            Self::Diagonal { pattern } | Self::SparseChol { pattern } => {
                let n = pattern.dim();
                Ok(Some(SparseCholesky::new(
                    pattern.clone(),
                    out[n..].to_vec(),
                    out[..n].to_vec(),
                )?))
            }
            Self::LowRank { .. } => Ok(None),
        }
    }

    pub fn low_rank_model<T: Real>(&self, out: &[T]) -> Result<Option<LowRankPrecision<T>>> {
        self.check_output(out)?;
        match *self {
            Self::LowRank { n, rank, mode } => {
                let q = Matrix::from_vec(n, rank, out[..n * rank].to_vec())?;
                let log_v = out[n * rank..n * rank + rank].to_vec();
                let a = out[n * rank + rank].exp();
                Ok(Some(LowRankPrecision::new(q, log_v, a, mode)?))
            }
            _ => Ok(None),
        }
    }

    /// Unpacks regressor output into a scoring/sampling handle.
    pub fn unpack<T: Real>(&self, out: &[T], mean: Vec<T>) -> Result<PredictedGaussian<T>> {
        check_len("mean", self.dim(), mean.len())?;
        let model = if let Some(sc) = self.sparse_factor(out)? {
            Model::Sparse(sc)
        } else {
            Model::LowRank(self.low_rank_model(out)?.expect("low-rank head"))
        };
        Ok(PredictedGaussian { mean, model })
    }

    /// Per-record training loss, its NLL component, and the gradient of
    /// the loss with respect to the head parameters.
    ///
    /// The loss is the NLL plus `ortho_weight · ‖Q̂ᵀQ̂ − I‖²` for low-rank
    /// heads; for the other heads it equals the NLL.
    pub fn loss_and_grad<T: Real>(
        &self,
        out: &[T],
        mean: &[T],
        x: &[T],
        ortho_weight: T,
    ) -> Result<HeadLoss<T>> {
        if let Some(sc) = self.sparse_factor(out)? {
            let (nll, g) = sc.nll_and_grad(mean, x)?;
            let mut grad = g.log_diag;
            grad.extend_from_slice(&g.off_diag);
            return Ok(HeadLoss {
                nll,
                loss: nll,
                grad,
            });
        }
        let lr = self.low_rank_model(out)?.expect("low-rank head");
        let (nll, g) = lr.nll_and_grad(mean, x)?;
        let penalty = lr.ortho_penalty();
        let pg = lr.ortho_penalty_grad();
        let mut grad: Vec<T> = g
            .q
            .as_slice()
            .iter()
            .zip(pg.as_slice())
            .map(|(&a, &b)| a + ortho_weight * b)
            .collect();
        grad.extend_from_slice(&g.log_v);
        grad.push(g.diag_a * lr.diag_a());
        Ok(HeadLoss {
            nll,
            loss: nll + ortho_weight * penalty,
            grad,
        })
    }
}

#[derive(Clone, Debug)]
pub struct HeadLoss<T> {
    pub nll: T,
    pub loss: T,
    pub grad: Vec<T>,
}

#[derive(Clone, Debug)]
pub enum Model<T> {
    Sparse(SparseCholesky<T>),
    LowRank(LowRankPrecision<T>),
}

/// Predicted `N(μ, Σ)` with a uniform interface across heads.
#[derive(Clone, Debug)]
pub struct PredictedGaussian<T> {
    mean: Vec<T>,
    model: Model<T>,
}

impl<T: Real> PredictedGaussian<T> {
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn nll(&self, x: &[T]) -> Result<T> {
        match &self.model {
            Model::Sparse(sc) => sc.nll(&self.mean, x),
            Model::LowRank(lr) => lr.nll(&self.mean, x),
        }
    }

    pub fn sample(&self, u: &[T]) -> Result<Vec<T>> {
        match &self.model {
            Model::Sparse(sc) => sc.sample(&self.mean, u),
            Model::LowRank(lr) => lr.sample(&self.mean, u),
        }
    }

    /// Dense mean-and-precision-factor form.
    pub fn densify(&self) -> Result<DenseGaussian<T>> {
        match &self.model {
            Model::Sparse(sc) => sc.to_dense_gaussian(self.mean.clone()),
            Model::LowRank(lr) => {
                let l = linalg::cholesky(&lr.precision_dense()?)?;
                DenseGaussian::new(self.mean.clone(), l)
            }
        }
    }

    pub fn covariance(&self) -> Result<DenseCovariance<T>> {
        match &self.model {
            Model::Sparse(sc) => Ok(sc.to_dense_gaussian(self.mean.clone())?.covariance()),
            Model::LowRank(lr) => lr.covariance_dense(),
        }
    }

    /// `D_KL(N(0, Σ̂) ‖ N(0, Σ_gt))`.
    pub fn kl_to(&self, gt: &DenseCovariance<T>) -> Result<T> {
        gaussian::kl_precision_to_covariance(&self.densify()?, gt)
    }
}
