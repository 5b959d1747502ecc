use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::regressor::{CondRegressor, Gradients};
use crate::error::{check_len, Error, Result};
use crate::gaussian::DenseCovariance;
use crate::metrics::{self, EvalRow};
use crate::scalar::Real;

/// One training or test example.
#[derive(Clone, Debug)]
pub struct TrainRecord<T> {
    /// Regressor input (the mean itself for synthetic data, a reconstructor
    /// code otherwise).
    pub cond: Vec<T>,
    pub mean: Vec<T>,
    pub target: Vec<T>,
    pub gt_cov: Option<DenseCovariance<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Weight of the orthogonality penalty (low-rank heads only).
    pub ortho_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            ortho_weight: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "need learning_rate > 0, epochs ≥ 1, batch_size ≥ 1 (got {}, {}, {})",
                self.learning_rate, self.epochs, self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    /// Mean training NLL of each epoch, measured on the pre-update weights
    /// of every minibatch.
    pub epoch_nll: Vec<f64>,
    pub test_nll: Option<f64>,
    pub test_kl: Option<f64>,
    pub test_frobenius: Option<f64>,
    pub wall_seconds: f64,
}

impl FitReport {
    /// Fraction of consecutive epoch pairs whose mean NLL did not increase.
    pub fn monotone_fraction(&self) -> f64 {
        if self.epoch_nll.len() < 2 {
            return 1.0;
        }
        let pairs = self.epoch_nll.windows(2);
        let n = pairs.len();
        pairs.filter(|w| w[1] <= w[0]).count() as f64 / n as f64
    }

    /// Equality of everything except the wall-clock time.
    pub fn same_results(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let opt = |v: Option<f64>| v.map(f64::to_bits);
        bits(&self.epoch_nll) == bits(&other.epoch_nll)
            && opt(self.test_nll) == opt(other.test_nll)
            && opt(self.test_kl) == opt(other.test_kl)
            && opt(self.test_frobenius) == opt(other.test_frobenius)
    }
}

struct Adam<T> {
    m: Gradients<T>,
    v: Gradients<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    fn new(reg: &CondRegressor<T>) -> Self {
        Self {
            m: reg.zero_gradients(),
            v: reg.zero_gradients(),
            step: 0,
        }
    }

    fn update(&mut self, reg: &mut CondRegressor<T>, grads: &Gradients<T>, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = T::lit(cfg.learning_rate * c2.sqrt() / c1);
        let eps = T::lit(cfg.adam_epsilon * c2.sqrt());
        let (b1, b2) = (T::lit(b1), T::lit(b2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (k, layer) in reg.layers_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            let pairs = [
                (
                    layer.weights.as_mut_slice(),
                    g.weights.as_slice(),
                    m.weights.as_mut_slice(),
                    v.weights.as_mut_slice(),
                ),
                (
                    layer.bias.as_mut_slice(),
                    g.bias.as_slice(),
                    m.bias.as_mut_slice(),
                    v.bias.as_mut_slice(),
                ),
            ];
            for (p, g, m, v) in pairs {
                for i in 0..p.len() {
                    let gi = g[i];
                    m[i] = b1 * m[i] + one_b1 * gi;
                    v[i] = b2 * v[i] + one_b2 * gi * gi;
                    p[i] -= lr * m[i] / (v[i].sqrt() + eps);
                }
            }
        }
    }
}

fn check_records<T: Real>(reg: &CondRegressor<T>, records: &[TrainRecord<T>]) -> Result<()> {
    let n = reg.head().dim();
    for r in records {
        check_len("conditioning vector", reg.input_dim(), r.cond.len())?;
        check_len("record mean", n, r.mean.len())?;
        check_len("record target", n, r.target.len())?;
    }
    Ok(())
}

/// Maximum-likelihood training with Adam over shuffled minibatches.
///
/// The minibatch objective is the mean per-record loss (NLL, plus the
/// orthogonality penalty for low-rank heads). Data order is drawn from a
/// ChaCha stream seeded by `cfg.seed`, so runs are reproducible. If `test`
/// is non-empty the report carries its mean metrics.
pub fn fit<T: Real>(
    reg: &mut CondRegressor<T>,
    train: &[TrainRecord<T>],
    test: &[TrainRecord<T>],
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    check_records(reg, train)?;
    check_records(reg, test)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(reg);
    let ortho = T::lit(cfg.ortho_weight);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_nll = Vec::with_capacity(cfg.epochs);
    let mut grads = reg.zero_gradients();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            for g in grads.iter_mut() {
                g.weights.as_mut_slice().fill(T::zero());
                g.bias.fill(T::zero());
            }
            let scale = T::lit(1.0 / idx.len() as f64);
            for &i in idx {
                let rec = &train[i];
                let trace = reg.forward_trace(&rec.cond)?;
                let hl = reg
                    .head()
                    .loss_and_grad(&trace.output, &rec.mean, &rec.target, ortho)?;
                if !hl.loss.is_finite() || hl.grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss { epoch, batch });
                }
                total += hl.nll.to_f64_lossy();
                reg.accumulate_backward(&trace, &hl.grad, scale, &mut grads)?;
            }
            adam.update(reg, &grads, cfg);
        }
        epoch_nll.push(total / train.len() as f64);
    }

    let (test_nll, test_kl, test_frobenius) = if test.is_empty() {
        (None, None, None)
    } else {
        let rows = evaluate(reg, test)?;
        let s = metrics::summarize(&rows);
        (Some(s.nll.mean), s.kl.map(|k| k.mean), s.frobenius.map(|f| f.mean))
    };
    Ok(FitReport {
        epoch_nll,
        test_nll,
        test_kl,
        test_frobenius,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-record NLL, and KL / Frobenius distance to the ground truth when
/// the record carries one.
pub fn evaluate<T: Real>(reg: &CondRegressor<T>, records: &[TrainRecord<T>]) -> Result<Vec<EvalRow>> {
    check_records(reg, records)?;
    records
        .iter()
        .enumerate()
        .map(|(id, rec)| {
            let pred = reg.predict_gaussian(&rec.cond, &rec.mean)?;
            let nll = pred.nll(&rec.target)?.to_f64_lossy();
            let (kl, frob) = match &rec.gt_cov {
                Some(gt) => {
                    let kl = pred.kl_to(gt)?.to_f64_lossy();
                    let cov = pred.covariance()?;
                    let frob = crate::gaussian::frobenius_dist(&cov, gt)?.to_f64_lossy();
                    (Some(kl), Some(frob))
                }
                None => (None, None),
            };
            Ok(EvalRow {
                record_id: id,
                nll,
                kl_to_gt: kl,
                frob_to_gt: frob,
            })
        })
        .collect()
}

/// Rows for the ground-truth covariances themselves (KL and distance 0).
pub fn evaluate_ground_truth<T: Real>(records: &[TrainRecord<T>]) -> Result<Vec<EvalRow>> {
    records
        .iter()
        .enumerate()
        .map(|(id, rec)| {
            let gt = rec.gt_cov.as_ref().ok_or_else(|| {
                Error::InvalidConfig(format!("record {id} has no ground-truth covariance"))
            })?;
            let nll = crate::gaussian::nll_covariance(gt, &rec.mean, &rec.target)?;
            Ok(EvalRow {
                record_id: id,
                nll: nll.to_f64_lossy(),
                kl_to_gt: Some(crate::gaussian::gaussian_kl(gt, gt)?.to_f64_lossy()),
                frob_to_gt: Some(crate::gaussian::frobenius_dist(gt, gt)?.to_f64_lossy()),
            })
        })
        .collect()
}
