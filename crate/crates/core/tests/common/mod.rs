//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ddm_core::linalg::normalize_columns;
use ddm_core::DesignMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn uniform_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_design<R: Rng>(m: usize, n: usize, rng: &mut R) -> DesignMatrix {
    normalize_columns(uniform_matrix(m, n, rng)).unwrap()
}

pub fn random_symmetric<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let a = uniform_matrix(dim, dim, rng) * scale;
    (&a + a.transpose()) * 0.5
}

/// Random positive definite matrix with unit trace.
pub fn random_weight<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let a = uniform_matrix(dim, dim, rng);
    let w = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1;
    let t = w.trace();
    w / t
}

/// Taylor series with scaling and squaring.
pub fn exp_series(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.norm();
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.5 {
        squarings += 1;
    }
    let scaled = a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..60 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() < 1e-300 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `max |λ|` of a symmetric matrix by power iteration on its square.
pub fn power_iteration_norm(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    let sq = s * s;
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.37).sin());
    v /= v.norm();
    let mut last = 0.0;
    for k in 0..200_000 {
        let w = &sq * &v;
        let rq = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if k > 10 && (rq - last).abs() <= 1e-16 * rq.abs() {
            break;
        }
        last = rq;
    }
    v.dot(&(&sq * &v)).sqrt()
}

/// Plain `(1/N) Σ y yᵀ` with `y = B (z - z0)`, one sample at a time.
pub fn covariance_loop(samples: &[Vec<i8>], b: &DMatrix<f64>, z0: &DVector<f64>) -> DMatrix<f64> {
    let m = b.nrows();
    let mut acc = DMatrix::zeros(m, m);
    for z in samples {
        let zc = DVector::from_fn(z.len(), |i, _| z[i] as f64 - z0[i]);
        let y = b * zc;
        acc += &y * y.transpose();
    }
    acc / samples.len() as f64
}
