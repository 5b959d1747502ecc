use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use structcov::estimator::Head;
use structcov::synthdata::Dataset;
use structcov::{EllipseConfig, GridShape, LowRankMode, SplineConfig, TrainConfig};

use crate::UsageError;

#[derive(Parser, Debug)]
#[command(name = "structcov", version, about = "Structured residual covariance experiments")]
pub struct ExperimentSpec {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset file.
    Gen(GenArgs),
    /// Train a covariance regressor.
    Fit(FitArgs),
    /// Score a model (or the ground truth) on a dataset.
    Eval(EvalArgs),
    /// Write (mean, target, mean + sampled residual) image triptychs.
    Sample(SampleArgs),
    /// Run the eigen-projection denoising demo.
    Denoise(DenoiseArgs),
    /// Aggregate evaluation CSVs into one comparison table.
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Splines,
    Ellipses,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Diagonal,
    SparseChol,
    Lowrank,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    Precision,
    Covariance,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Index of the first record; records are addressable, so disjoint
    /// ranges of one seed form train/test splits.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Overrides the kernel jitter.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

impl GenArgs {
    pub fn dataset(&self) -> Result<Dataset, UsageError> {
        if self.count == 0 {
            return Err(UsageError("--count must be at least 1".into()));
        }
        let ds = match self.dataset {
            DatasetKind::Splines => {
                let base = SplineConfig::default();
                Dataset::Splines(SplineConfig {
                    seed: self.seed,
                    jitter: self.jitter.unwrap_or(base.jitter),
                    ..base
                })
            }
            DatasetKind::Ellipses => {
                let base = EllipseConfig::default();
                Dataset::Ellipses(EllipseConfig {
                    seed: self.seed,
                    jitter: self.jitter.unwrap_or(base.jitter),
                    ..base
                })
            }
        };
        ds.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(ds)
    }
}

#[derive(Args, Debug)]
pub struct HeadArgs {
    #[arg(long, value_enum)]
    pub head: HeadKind,
    /// Patch width f (sparse-chol only).
    #[arg(long)]
    pub patch: Option<usize>,
    /// Number of eigenvectors n_v (lowrank only).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Which matrix the low-rank triple describes (lowrank only).
    #[arg(long, value_enum)]
    pub mode: Option<ModeKind>,
}

impl HeadArgs {
    /// Checks flag consistency and builds the head for `n`-dimensional data
    /// laid out as `shape`.
    pub fn head(&self, n: usize, shape: Option<GridShape>) -> Result<Head, UsageError> {
        let usage = |m: &str| Err(UsageError(m.into()));
        match self.head {
            HeadKind::Diagonal | HeadKind::Lowrank if self.patch.is_some() => {
                return usage("--patch is only valid with --head sparse-chol")
            }
            HeadKind::Diagonal | HeadKind::SparseChol if self.rank.is_some() || self.mode.is_some() => {
                return usage("--rank and --mode are only valid with --head lowrank")
            }
            _ => {}
        }
        let built = match self.head {
            HeadKind::Diagonal => Head::diagonal(n),
            HeadKind::SparseChol => {
                let Some(f) = self.patch else {
                    return usage("--head sparse-chol needs --patch");
                };
                let Some(shape) = shape else {
                    return usage("--head sparse-chol needs --dataset to fix the grid layout");
                };
                Head::sparse(shape, f)
            }
            HeadKind::Lowrank => {
                let Some(rank) = self.rank else {
                    return usage("--head lowrank needs --rank");
                };
                let mode = match self.mode.unwrap_or(ModeKind::Precision) {
                    ModeKind::Precision => LowRankMode::PrecisionSide,
                    ModeKind::Covariance => LowRankMode::CovarianceSide,
                };
                Head::low_rank(n, rank, mode)
            }
        };
        built.map_err(|e| UsageError(e.to_string()))
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 10.0)]
    pub ortho_weight: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,100")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn config(&self) -> Result<TrainConfig, UsageError> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            ortho_weight: self.ortho_weight,
            ..TrainConfig::default()
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        if self.hidden.contains(&0) {
            return Err(UsageError("--hidden widths must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Training dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional test dataset for the final metrics.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Grid layout of the data (needed by sparse-chol heads).
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    #[command(flatten)]
    pub head: HeadArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Checkpoint output.
    #[arg(long)]
    pub model: PathBuf,
    /// Training report CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "ground_truth", conflicts_with = "ground_truth")]
    pub model: Option<PathBuf>,
    /// Score the generating covariances themselves.
    #[arg(long)]
    pub ground_truth: bool,
    /// Add the n·log 2π constant to every NLL.
    #[arg(long)]
    pub full_nll: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Clean ellipse images used to fit the reconstructor and regressor.
    #[arg(long)]
    pub train: PathBuf,
    /// Clean ellipse images to corrupt and denoise.
    #[arg(long)]
    pub data: PathBuf,
    /// Leading eigenvectors kept (default: a quarter of the pixels).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    pub noise_sigma: f64,
    /// Rank of the linear reconstructor.
    #[arg(long, default_value_t = 32)]
    pub recon_rank: usize,
    #[arg(long, default_value_t = 5)]
    pub patch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, value_delimiter = ',', default_value = "64,16")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of (clean, noisy, output) triplets written as images.
    #[arg(long, default_value_t = 8)]
    pub images: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation CSVs; each becomes one row named after its file stem.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Grid layout of `n` values for a dataset kind.
pub fn grid_for(kind: DatasetKind, n: usize) -> Result<GridShape, UsageError> {
    let shape = match kind {
        DatasetKind::Splines => GridShape::signal(n),
        DatasetKind::Ellipses => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(UsageError(format!("{n} values do not form a square image")));
            }
            GridShape::square(side)
        }
    };
    shape.map_err(|e| UsageError(e.to_string()))
}
