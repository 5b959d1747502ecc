mod common;

use std::sync::Arc;

use common::*;
use structcov::estimator::{fit, CondRegressor, Head, TrainConfig, TrainRecord};
use structcov::sparse::{build_pattern, nll_sparse};
use structcov::synthdata::gen_splines;
use structcov::{SparseCholesky, SplineConfig, SynthRecord};

#[test]
fn sparse_nll_tracks_double_precision() {
    let mut r = rng(100);
    let sc64 = random_sparse(&mut r, square(4), 3, 0.5, 0.3);
    let p = Arc::new(build_pattern(square(4), 3).unwrap());
    let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let sc32 = SparseCholesky::new(p, to32(sc64.off_diag()), to32(sc64.log_diag())).unwrap();
    let mean = normals(&mut r, 16);
    let x = normals(&mut r, 16);
    let a = nll_sparse(&sc64, &mean, &x).unwrap();
    let b = nll_sparse(&sc32, &to32(&mean), &to32(&x)).unwrap() as f64;
    assert!(rel_diff(b, a) <= 1e-4);
}

#[test]
fn single_precision_training_runs() {
    let cfg = SplineConfig { n_points: 12, seed: 101, jitter: 1e-2, ..SplineConfig::default() };
    let recs: Vec<SynthRecord<f32>> = gen_splines(128, &cfg).unwrap();
    let train: Vec<TrainRecord<f32>> = recs.into_iter().map(|r| r.into_train(true)).collect();
    let mut reg = CondRegressor::<f32>::new(12, &[16], Head::sparse(structcov::GridShape::signal(12).unwrap(), 3).unwrap(), 3)
        .unwrap();
    let tc = TrainConfig { learning_rate: 1e-3, epochs: 5, batch_size: 32, ..TrainConfig::default() };
    let rep = fit(&mut reg, &train[..100], &train[100..], &tc).unwrap();
    assert!(rep.epoch_nll.iter().all(|v| v.is_finite()));
    assert!(rep.epoch_nll.last() < rep.epoch_nll.first());
    assert!(rep.test_kl.unwrap().is_finite());
}
