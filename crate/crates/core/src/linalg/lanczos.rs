//! Largest eigenpair of a symmetric operator given only as a mat-vec.
//!
//! Lanczos with full reorthogonalization. The Krylov basis is kept explicitly,
//! so when it spans the whole space the answer is exact; on breakdown the
//! basis is extended with a fresh direction rather than declaring convergence,
//! because an invariant subspace need not contain the top eigenvector.

use nalgebra::DMatrix;

use super::sym_eigen;
use crate::error::{DdmError, Result};

/// Below this dimension the operator is materialized and solved densely.
const DENSE_CUTOFF: usize = 24;
/// Ritz values closer than this are treated as tied; the first one wins.
const TIE_TOL: f64 = 1e-10;
/// Krylov dimension before convergence is first checked; a start close to a
/// lower eigenvector shows tiny early Ritz increments.
const MIN_STAGNATION_DIM: usize = 8;
const CHECK_EVERY: usize = 4;

#[derive(Debug, Clone)]
pub struct TopEigen {
    pub value: f64,
    /// Unit-norm eigenvector.
    pub vector: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Deterministic vector with no special alignment to coordinate axes.
fn generic_vector(dim: usize, salt: usize) -> Vec<f64> {
    let golden = 0.618_033_988_749_894_9;
    (0..dim)
        .map(|i| 1.0 + 0.5 * (((i + 1 + salt * 31) as f64 * golden).fract() - 0.5))
        .collect()
}

/// Index of the largest value; earlier indices win ties within [`TIE_TOL`].
fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + TIE_TOL {
            best = i;
        }
    }
    best
}

fn dense_top<F>(dim: usize, apply: &mut F) -> Result<TopEigen>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut a = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        apply(&e, &mut out);
        e[j] = 0.0;
        a.column_mut(j).copy_from_slice(&out);
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = sym_eigen(&a)?;
    let best = argmax_first(eig.eigenvalues.as_slice());
    let mut vector: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();
    let nv = norm(&vector);
    vector.iter_mut().for_each(|v| *v /= nv);
    Ok(TopEigen {
        value: eig.eigenvalues[best],
        vector,
    })
}

/// Largest eigenvalue and a unit eigenvector of the symmetric operator
/// `apply` on `R^dim`.
///
/// `start` warm-starts the iteration; it is blended with a generic vector so
/// an exact non-top eigenvector cannot stall the search. The iteration stops
/// once the residual `‖A v - θ v‖`, or the growth of the top Ritz value over
/// the last few steps, falls below `tol` times the operator scale.
/// `max_krylov` caps the Krylov dimension; at the cap the top Ritz pair is
/// returned as is.
pub fn top_eigenpair<F>(dim: usize, mut apply: F, start: Option<&[f64]>, tol: f64, max_krylov: usize) -> Result<TopEigen>
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert!(dim > 0, "top_eigenpair on an empty space");
    if dim <= DENSE_CUTOFF {
        return dense_top(dim, &mut apply);
    }

    let mut q0 = generic_vector(dim, 0);
    let g = norm(&q0);
    q0.iter_mut().for_each(|v| *v /= g);
    if let Some(s) = start {
        let ns = norm(s);
        if ns > 0.0 && ns.is_finite() {
            for (qi, si) in q0.iter_mut().zip(s) {
                *qi = si / ns + 0.05 * *qi;
            }
            let nq = norm(&q0);
            q0.iter_mut().for_each(|v| *v /= nq);
        }
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(64);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut scale = 0.0f64;
    let mut fresh_salt = 1;
    let mut thetas: Vec<f64> = Vec::new();
    basis.push(q0);

    loop {
        let j = basis.len() - 1;
        apply(&basis[j], &mut w);
        let alpha = dot(&basis[j], &w);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        // classical Gram-Schmidt, repeated once if the pass cancelled heavily
        let mut before = norm(&w);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
            let after = norm(&w);
            if after > 0.7 * before {
                break;
            }
            before = after;
        }
        let beta = norm(&w);
        alphas.push(alpha);
        scale = scale.max(alpha.abs() + beta);

        let k = basis.len();
        let exhausted = k == dim || k >= max_krylov.max(2);
        let breakdown = beta <= 1e-12 * scale.max(f64::MIN_POSITIVE);

        if exhausted || (!breakdown && k >= MIN_STAGNATION_DIM && k.is_multiple_of(CHECK_EVERY)) {
            let (theta, s) = ritz_top(&alphas, &betas)?;
            let scale_now = scale.max(f64::MIN_POSITIVE);
            let residual = beta * s[k - 1].abs();
            let stagnant = thetas.last().is_some_and(|&prev| theta - prev <= tol * scale_now);
            thetas.push(theta);
            if exhausted || stagnant || residual <= tol * scale_now.max(theta.abs()) {
                let mut v = vec![0.0; dim];
                for (coef, q) in s.iter().zip(&basis) {
                    axpy(*coef, q, &mut v);
                }
                let nv = norm(&v);
                v.iter_mut().for_each(|x| *x /= nv);
                return Ok(TopEigen {
                    value: theta,
                    vector: v,
                });
            }
        }

        if breakdown {
            // Extend with a fresh direction decoupled from the current block.
            let mut next = loop {
                let mut cand = generic_vector(dim, fresh_salt);
                fresh_salt += 1;
                let c0 = fresh_salt % dim;
                cand[c0] += 1.0;
                for _ in 0..2 {
                    for q in &basis {
                        let c = dot(q, &cand);
                        axpy(-c, q, &mut cand);
                    }
                }
                if norm(&cand) > 1e-6 {
                    break cand;
                }
            };
            let nn = norm(&next);
            next.iter_mut().for_each(|x| *x /= nn);
            betas.push(0.0);
            basis.push(next);
        } else {
            betas.push(beta);
            basis.push(w.iter().map(|x| x / beta).collect());
        }
    }
}

/// Number of eigenvalues of the tridiagonal `(alphas, betas)` that are `< x`.
fn sturm_count(alphas: &[f64], betas: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alphas.len() {
        let b2 = if i == 0 { 0.0 } else { betas[i - 1] * betas[i - 1] };
        d = alphas[i] - x - b2 / d;
        if d == 0.0 {
            d = -f64::EPSILON * (x.abs() + 1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { betas[i - 1].abs() } else { 0.0 } + if i + 1 < k { betas[i].abs() } else { 0.0 };
        lo = lo.min(alphas[i] - r);
        hi = hi.max(alphas[i] + r);
    }
    (lo, hi)
}

/// Largest eigenvalue of the tridiagonal, by bisection on the Sturm count.
fn ritz_value(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    let (mut lo, mut hi) = gershgorin(alphas, betas);
    let precision = 2.0 * f64::EPSILON * lo.abs().max(hi.abs());
    while hi - lo > precision {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alphas, betas, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `(T - shift) x = rhs` for tridiagonal `T`, Gaussian elimination
/// with partial pivoting.
fn tridiagonal_solve(alphas: &[f64], betas: &[f64], shift: f64, rhs: &mut [f64]) {
    let k = alphas.len();
    let mut d: Vec<f64> = alphas.iter().map(|a| a - shift).collect();
    let mut du: Vec<f64> = betas.to_vec();
    let dl: Vec<f64> = betas.to_vec();
    let mut du2 = vec![0.0; k.saturating_sub(2)];
    let tiny = f64::EPSILON * (alphas.iter().map(|a| a.abs()).fold(0.0, f64::max) + 1.0);
    for i in 0..k.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let f = dl[i] / d[i];
            d[i + 1] -= f * du[i];
            rhs[i + 1] -= f * rhs[i];
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            if i + 2 < k {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            du[i] = tmp;
            rhs.swap(i, i + 1);
            rhs[i + 1] -= f * rhs[i];
        }
    }
    if d[k - 1] == 0.0 {
        d[k - 1] = tiny;
    }
    rhs[k - 1] /= d[k - 1];
    if k >= 2 {
        rhs[k - 2] = (rhs[k - 2] - du[k - 2] * rhs[k - 1]) / d[k - 2];
    }
    for i in (0..k.saturating_sub(2)).rev() {
        rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / d[i];
    }
}

/// Top eigenpair of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal: bisection on the Sturm count, then inverse
/// iteration for the vector.
fn ritz_top(alphas: &[f64], betas: &[f64]) -> Result<(f64, Vec<f64>)> {
    let k = alphas.len();
    if k == 1 {
        return Ok((alphas[0], vec![1.0]));
    }
    let theta = ritz_value(alphas, betas);
    let (lo, hi) = gershgorin(alphas, betas);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let shift = theta + 4.0 * f64::EPSILON * scale;
    let mut v: Vec<f64> = (0..k).map(|i| 1.0 + 0.1 * ((i as f64) * 0.618_033_988_749_894_9).fract()).collect();
    for _ in 0..3 {
        tridiagonal_solve(alphas, betas, shift, &mut v);
        let nv = norm(&v);
        if !nv.is_finite() || nv == 0.0 {
            return Err(DdmError::Numerical(format!(
                "inverse iteration failed on a {k}x{k} tridiagonal (theta = {theta:e})"
            )));
        }
        v.iter_mut().for_each(|x| *x /= nv);
    }
    Ok((theta, v))
}
