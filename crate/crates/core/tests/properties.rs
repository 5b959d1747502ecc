mod common;

use common::*;
use proptest::prelude::*;
use structcov::denoise::eigen_project;
use structcov::gaussian::{gaussian_kl, nll_dense, sample_dense};
use structcov::sparse::{nll_sparse, sample_sparse, to_dense};
use structcov::{DenseCovariance, DenseGaussian, GridShape};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sigma_of(seed: u64, n: usize) -> DenseCovariance<f64> {
    DenseCovariance::new(random_spd(&mut rng(seed), n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent(seed in any::<u64>(), n in 2usize..12, k_frac in 0.0f64..1.0) {
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let sigma = sigma_of(seed, n);
        let s = normals(&mut rng(seed ^ 1), n);
        let once = eigen_project(&sigma, &s, k).unwrap();
        let twice = eigen_project(&sigma, &once, k).unwrap();
        prop_assert!(rel_max_diff(&twice, &once) <= 1e-10);
    }

    #[test]
    fn projection_contracts_and_grows_with_k(seed in any::<u64>(), n in 2usize..12) {
        let sigma = sigma_of(seed, n);
        let s = normals(&mut rng(seed ^ 2), n);
        let norms: Vec<f64> = (1..=n).map(|k| norm(&eigen_project(&sigma, &s, k).unwrap())).collect();
        prop_assert!(norms.iter().all(|&v| v <= norm(&s) * (1.0 + 1e-12)));
        prop_assert!(norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
    }

    #[test]
    fn projection_is_linear(seed in any::<u64>(), n in 2usize..12, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let k = n / 2 + 1;
        let sigma = sigma_of(seed, n);
        let mut r = rng(seed ^ 3);
        let s = normals(&mut r, n);
        let t = normals(&mut r, n);
        let comb: Vec<f64> = s.iter().zip(&t).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = eigen_project(&sigma, &comb, k).unwrap();
        let ps = eigen_project(&sigma, &s, k).unwrap();
        let pt = eigen_project(&sigma, &t, k).unwrap();
        let rhs: Vec<f64> = ps.iter().zip(&pt).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assert!(rel_max_diff(&lhs, &rhs) <= 1e-9);
    }

    #[test]
    fn sparse_agrees_with_dense(seed in any::<u64>(), h in 1usize..9, w in 1usize..9, fi in 0usize..3) {
        let f = [1, 3, 5][fi];
        prop_assume!(f <= 2 * h.max(w) - 1);
        let shape = GridShape::new(h, w).unwrap();
        let n = shape.len();
        let mut r = rng(seed);
        let sc = random_sparse(&mut r, shape, f, 1.0, 0.5);
        let mean = normals(&mut r, n);
        let x = normals(&mut r, n);
        let u = normals(&mut r, n);
        let dense = DenseGaussian::new(mean.clone(), to_dense(&sc).unwrap()).unwrap();
        prop_assert!(rel_diff(nll_sparse(&sc, &mean, &x).unwrap(), nll_dense(&dense, &x).unwrap()) <= 1e-9);
        let a = sample_sparse(&sc, &mean, &u).unwrap();
        let b = sample_dense(&dense, &u).unwrap();
        prop_assert!(rel_max_diff(&a, &b) <= 1e-9);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(seed in any::<u64>(), n in 1usize..8) {
        let a = sigma_of(seed, n);
        let b = sigma_of(seed ^ 4, n);
        prop_assert!(gaussian_kl(&a, &b).unwrap() >= -1e-12);
        prop_assert!(gaussian_kl(&a, &a).unwrap().abs() <= 1e-10);
    }
}
