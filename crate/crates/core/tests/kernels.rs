mod common;

use common::*;
use ddm_core::linalg::{empirical_covariance, matrix_exponential, operator_norm};
use ddm_core::rng::seeded;
use ddm_core::{Assignment, SymmetricMatrix};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn max_rel_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponential_matches_series(seed in any::<u64>(), dim in 1usize..=10, scale in 0.01f64..2.0) {
        let a = random_symmetric(dim, scale, &mut seeded(seed));
        let got = matrix_exponential(&SymmetricMatrix::new(a.clone()).unwrap()).unwrap();
        prop_assert!(max_rel_diff(got.matrix(), &exp_series(&a)) < 1e-10);
    }

    #[test]
    fn operator_norm_matches_power_iteration(seed in any::<u64>(), dim in 1usize..=50) {
        let a = random_symmetric(dim, 1.0, &mut seeded(seed));
        let got = operator_norm(&SymmetricMatrix::new(a.clone()).unwrap()).unwrap();
        let want = power_iteration_norm(&a);
        prop_assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn empirical_covariance_is_psd(seed in any::<u64>(), m in 1usize..12, n in 1usize..30, samples in 1usize..40) {
        let mut rng = seeded(seed);
        let b = random_design(m, n, &mut rng);
        let z0 = DVector::from_fn(n, |_, _| rng.random_range(-0.99..0.99));
        let raw: Vec<Vec<i8>> = (0..samples)
            .map(|_| (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect())
            .collect();
        let zs: Vec<Assignment> = raw.iter().cloned().map(|z| Assignment::new(z).unwrap()).collect();
        let cov = empirical_covariance(&zs, &b, &z0).unwrap();
        prop_assert!(cov.min_eigenvalue().unwrap() >= -1e-10);
        prop_assert!((cov.matrix() - covariance_loop(&raw, b.matrix(), &z0)).amax() < 1e-12);
    }
}

#[test]
fn exponential_inverse_pair() {
    let a = random_symmetric(8, 1.5, &mut seeded(3));
    let e = matrix_exponential(&SymmetricMatrix::new(a.clone()).unwrap()).unwrap();
    let e_neg = matrix_exponential(&SymmetricMatrix::new(-a).unwrap()).unwrap();
    let prod = e.matrix() * e_neg.matrix();
    assert!((prod - nalgebra::DMatrix::identity(8, 8)).amax() < 1e-12);
}
