//! Potential outcomes, the Horvitz-Thompson estimator and the variance
//! bounds implied by a bound on `‖Cov(Bz)‖` for the augmented matrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{DdmError, Result};
use crate::linalg::{Assignment, ProbabilityVector, SymmetricMatrix};
use crate::mwu::DesignDistribution;
use crate::stats::Summary;

/// Covariates, both potential outcomes and assignment probabilities of `n`
/// units. The covariates are the row-normalized ones the augmented matrix
/// is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentInstance {
    x: DMatrix<f64>,
    a: DVector<f64>,
    b: DVector<f64>,
    p: ProbabilityVector,
}

impl ExperimentInstance {
    pub fn new(x: DMatrix<f64>, a: DVector<f64>, b: DVector<f64>, p: ProbabilityVector) -> Result<Self> {
        let n = p.len();
        if x.nrows() != n || a.len() != n || b.len() != n {
            return Err(DdmError::invalid(format!(
                "inconsistent unit counts: X has {} rows, a {}, b {}, p {n}",
                x.nrows(),
                a.len(),
                b.len()
            )));
        }
        if x.iter().chain(a.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(DdmError::invalid("instance has non-finite values"));
        }
        Ok(ExperimentInstance { x, a, b, p })
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn treated_outcomes(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn control_outcomes(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn probabilities(&self) -> &ProbabilityVector {
        &self.p
    }

    /// Same units under different assignment probabilities.
    pub fn with_probabilities(&self, p: ProbabilityVector) -> Result<Self> {
        ExperimentInstance::new(self.x.clone(), self.a.clone(), self.b.clone(), p)
    }

    /// `μ_i = a_i / p_i + b_i / (1 - p_i)`.
    pub fn potential_outcome_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| {
            let pi = self.p.as_slice()[i];
            self.a[i] / pi + self.b[i] / (1.0 - pi)
        })
    }
}

/// `τ = (1/n) Σ (a_i - b_i)`.
pub fn ate(inst: &ExperimentInstance) -> f64 {
    (&inst.a - &inst.b).sum() / inst.n() as f64
}

/// `(1/n) (Σ_{z=+1} a_i / p_i - Σ_{z=-1} b_i / (1 - p_i))`.
pub fn ht_estimate(z: &Assignment, inst: &ExperimentInstance) -> Result<f64> {
    let n = inst.n();
    if z.len() != n {
        return Err(DdmError::invalid(format!("assignment has length {} but n = {n}", z.len())));
    }
    let p = inst.p.as_slice();
    let total: f64 = z
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &zi)| if zi > 0 { inst.a[i] / p[i] } else { -inst.b[i] / (1.0 - p[i]) })
        .sum();
    Ok(total / n as f64)
}

/// Monte-Carlo MSE of the HT estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub mse: f64,
    pub std_error: f64,
    /// Mean of `τ̂ - τ`.
    pub bias: f64,
    pub reps: usize,
}

/// `(1/R) Σ_r (τ̂_r - τ)²` over `reps` draws of `design`.
pub fn mse_monte_carlo<R, F>(mut design: F, inst: &ExperimentInstance, reps: usize, rng: &mut R) -> Result<MseEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<Assignment>,
{
    if reps < 2 {
        return Err(DdmError::invalid("MSE estimate needs at least two replications"));
    }
    let tau = ate(inst);
    let errors = (0..reps)
        .map(|_| Ok(ht_estimate(&design(rng)?, inst)? - tau))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mse_from_errors(&errors))
}

/// Summarizes estimation errors `τ̂_r - τ`.
pub fn mse_from_errors(errors: &[f64]) -> MseEstimate {
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let s = Summary::of(&sq);
    MseEstimate {
        mse: s.mean,
        std_error: s.std_error(),
        bias: Summary::of(errors).mean,
        reps: errors.len(),
    }
}

/// Exact MSE of a finite mixture design, with the error from treating its
/// atoms as independent draws.
pub fn mixture_mse(dist: &DesignDistribution, inst: &ExperimentInstance) -> Result<MseEstimate> {
    let tau = ate(inst);
    let errors = dist
        .atoms()
        .iter()
        .map(|z| Ok(ht_estimate(z, inst)? - tau))
        .collect::<Result<Vec<f64>>>()?;
    let w = dist.weights();
    let mse: f64 = errors.iter().zip(w).map(|(e, w)| w * e * e).sum();
    let bias: f64 = errors.iter().zip(w).map(|(e, w)| w * e).sum();
    let var: f64 = errors.iter().zip(w).map(|(e, w)| (w * (e * e - mse)).powi(2)).sum();
    Ok(MseEstimate {
        mse,
        std_error: var.sqrt(),
        bias,
        reps: errors.len(),
    })
}

/// `(1/(4n²)) μᵀ Cov(z) μ` for `z ∈ {±1}ⁿ`: the treatment indicator is
/// `(1 + z)/2`, so `τ̂ - τ = (1/(2n)) Σ μ_i (z_i - z0_i)`.
pub fn mse_closed_form(cov_z: &SymmetricMatrix, inst: &ExperimentInstance) -> Result<f64> {
    let n = inst.n();
    if cov_z.dim() != n {
        return Err(DdmError::invalid(format!("Cov(z) is {0}x{0} but n = {n}", cov_z.dim())));
    }
    let mu = inst.potential_outcome_vector();
    Ok(mu.dot(&(cov_z.matrix() * &mu)) / (4 * n * n) as f64)
}

/// `(α / (1 - φ), α / φ)`: bounds on `‖Cov(Xᵀz)‖` and `‖Cov(z)‖`.
pub fn balance_robustness_bounds(alpha: f64, phi: f64) -> Result<(f64, f64)> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(DdmError::invalid(format!("phi = {phi} must be in (0, 1)")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DdmError::invalid(format!("alpha = {alpha} must be positive")));
    }
    Ok((alpha / (1.0 - phi), alpha / phi))
}

/// `(α / n) μᵀ (φ I + (1 - φ) X Xᵀ)⁻¹ μ`, a bound on `n Var(τ̂)`.
pub fn ridge_variance_bound(inst: &ExperimentInstance, alpha: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(DdmError::invalid(format!("phi = {phi} must be in (0, 1)")));
    }
    let n = inst.n();
    let x = &inst.x;
    let mut k = x * x.transpose() * (1.0 - phi);
    for i in 0..n {
        k[(i, i)] += phi;
    }
    let mu = inst.potential_outcome_vector();
    let chol = k
        .cholesky()
        .ok_or_else(|| DdmError::Numerical("φI + (1-φ)XXᵀ is not positive definite".into()))?;
    Ok(alpha / n as f64 * mu.dot(&chol.solve(&mu)))
}

/// `min_β (1/(φn)) ‖μ - Xβ‖² + (1/((1-φ)n)) ‖β‖²`, the ridge form of
/// [`ridge_variance_bound`] without the `α` factor.
pub fn ridge_objective(inst: &ExperimentInstance, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(DdmError::invalid(format!("phi = {phi} must be in (0, 1)")));
    }
    let n = inst.n() as f64;
    let x = &inst.x;
    let d = x.ncols();
    let mu = inst.potential_outcome_vector();
    // normal equations: (XᵀX/φ + I/(1-φ)) β = Xᵀμ/φ
    let mut a = x.transpose() * x / phi;
    for j in 0..d {
        a[(j, j)] += 1.0 / (1.0 - phi);
    }
    let rhs = x.transpose() * &mu / phi;
    let beta = a
        .cholesky()
        .ok_or_else(|| DdmError::Numerical("ridge normal equations are singular".into()))?
        .solve(&rhs);
    let resid = &mu - x * &beta;
    Ok(resid.norm_squared() / (phi * n) + beta.norm_squared() / ((1.0 - phi) * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::bernoulli_sample;
    use crate::rng::seeded;

    fn inst(a: &[f64], b: &[f64], p: &[f64]) -> ExperimentInstance {
        let n = a.len();
        ExperimentInstance::new(
            DMatrix::zeros(n, 1),
            DVector::from_column_slice(a),
            DVector::from_column_slice(b),
            ProbabilityVector::new(p.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ate_examples() {
        assert_eq!(ate(&inst(&[1.0, 2.0], &[1.0, 2.0], &[0.5, 0.5])), 0.0);
        assert_eq!(ate(&inst(&[2.0, 3.0], &[1.0, 2.0], &[0.5, 0.5])), 1.0);
        assert_eq!(ate(&inst(&[2.0, 4.0], &[1.0, 1.0], &[0.5, 0.5])), 2.0);
    }

    #[test]
    fn ht_examples() {
        let one = inst(&[1.0], &[0.0], &[0.5]);
        assert_eq!(ht_estimate(&Assignment::new(vec![1]).unwrap(), &one).unwrap(), 2.0);
        let two = inst(&[1.0, 1.0], &[1.0, 1.0], &[0.5, 0.5]);
        assert_eq!(ht_estimate(&Assignment::new(vec![1, -1]).unwrap(), &two).unwrap(), 0.0);
        assert!(ht_estimate(&Assignment::new(vec![1]).unwrap(), &two).is_err());
    }

    #[test]
    fn potential_outcomes_formula() {
        let i = inst(&[1.0, 2.0], &[3.0, 0.5], &[0.25, 0.5]);
        let mu = i.potential_outcome_vector();
        assert_eq!(mu[0], 1.0 / 0.25 + 3.0 / 0.75);
        assert_eq!(mu[1], 2.0 / 0.5 + 0.5 / 0.5);
    }

    #[test]
    fn mse_of_constant_estimator_is_zero() {
        let i = inst(&[0.0; 3], &[0.0; 3], &[0.3; 3]);
        let p = i.probabilities().clone();
        let est = mse_monte_carlo(|r| Ok(bernoulli_sample(&p, r)), &i, 100, &mut seeded(1)).unwrap();
        assert_eq!(est.mse, 0.0);
    }

    #[test]
    fn single_unit_mse_is_one() {
        let i = inst(&[1.0], &[0.0], &[0.5]);
        let p = i.probabilities().clone();
        let est = mse_monte_carlo(|r| Ok(bernoulli_sample(&p, r)), &i, 50_000, &mut seeded(2)).unwrap();
        // τ̂ ∈ {0, 2} and τ = 1, so every squared error is exactly 1
        assert_eq!(est.mse, 1.0);
        // Var(z) = 1 and μ = 2
        let cov = SymmetricMatrix::from_diagonal(&[1.0]).unwrap();
        assert_eq!(mse_closed_form(&cov, &i).unwrap(), 1.0);
    }

    #[test]
    fn bernoulli_mse_matches_closed_form() {
        let mut rng = seeded(3);
        let n = 30;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        let i = inst(&a, &b, &p);
        let pv = i.probabilities().clone();
        let cov = SymmetricMatrix::from_diagonal(pv.bernoulli_variances().as_slice()).unwrap();
        let exact = mse_closed_form(&cov, &i).unwrap();
        let est = mse_monte_carlo(|r| Ok(bernoulli_sample(&pv, r)), &i, 200_000, &mut rng).unwrap();
        assert!((est.mse - exact).abs() < 0.05 * exact, "{} vs {exact}", est.mse);
    }

    #[test]
    fn closed_form_examples() {
        let i = inst(&[0.25; 4], &[0.25; 4], &[0.5; 4]);
        let eye = SymmetricMatrix::identity(4);
        // μ = 1 for every unit
        assert_close!(mse_closed_form(&eye, &i).unwrap(), 1.0 / 16.0, 1e-15);
        assert_eq!(mse_closed_form(&SymmetricMatrix::zeros(4), &i).unwrap(), 0.0);
        assert!(mse_closed_form(&SymmetricMatrix::identity(3), &i).is_err());
    }

    #[test]
    fn balance_bounds_arithmetic() {
        assert_eq!(balance_robustness_bounds(1.0, 0.5).unwrap(), (2.0, 2.0));
        let (c, r) = balance_robustness_bounds(1.44, 0.9).unwrap();
        assert_close!(c, 14.4, 1e-12);
        assert_close!(r, 1.6, 1e-12);
        assert!(balance_robustness_bounds(1.0, 0.0).is_err());
        assert!(balance_robustness_bounds(1.0, 1.0).is_err());
    }

    #[test]
    fn ridge_bound_examples() {
        // n = 1, X = 0, μ = 1 needs a + b = 0.5 at p = 0.5
        let i = inst(&[0.25], &[0.25], &[0.5]);
        assert_close!(ridge_variance_bound(&i, 1.0, 0.5).unwrap(), 2.0, 1e-15);
        let zero = inst(&[0.0; 2], &[0.0; 2], &[0.5; 2]);
        assert_eq!(ridge_variance_bound(&zero, 1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ridge_bound_equals_ridge_regression_optimum() {
        let mut rng = seeded(4);
        let (n, d) = (12, 3);
        let x = crate::linalg::normalize_rows(&DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let p = ProbabilityVector::new((0..n).map(|_| rng.random_range(0.2..0.8)).collect()).unwrap();
        let i = ExperimentInstance::new(x, a, b, p).unwrap();
        for phi in [0.3, 0.5, 0.9] {
            let bound = ridge_variance_bound(&i, 1.7, phi).unwrap();
            let ridge = ridge_objective(&i, phi).unwrap();
            assert!((bound - 1.7 * ridge).abs() < 1e-10 * bound.max(1.0));
        }
    }

    #[test]
    fn mixture_mse_matches_sampling() {
        let i = inst(&[1.0, 0.3, 2.0], &[0.0, 1.0, -1.5], &[0.5, 0.4, 0.7]);
        let atoms = [vec![1, -1, 1], vec![-1, 1, -1], vec![1, 1, -1]]
            .into_iter()
            .map(|z| Assignment::new(z).unwrap())
            .collect();
        let dist = DesignDistribution::from_steps(atoms, vec![1.0, 1.0, 2.0]).unwrap();
        let exact = mixture_mse(&dist, &i).unwrap();
        let mut rng = seeded(8);
        let mc = mse_monte_carlo(|r| Ok(crate::mwu::mwu_sample(&dist, r)), &i, 200_000, &mut rng).unwrap();
        assert!((exact.mse - mc.mse).abs() < 4.0 * mc.std_error);
        assert!((exact.bias - mc.bias).abs() < 0.01);
    }
}
