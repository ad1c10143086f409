//! Matrix multiplicative-weights outer loop.
//!
//! Each iteration draws oracle samples against the current weight matrix
//! `W_{t-1}`, estimates `M̃_t = Cov(B z_t)` from them, takes the step
//! `α_t = ε / (6 ‖M̃_t‖)` and sets `W_t = exp(Σ α_τ M̃_τ)`. The output is the
//! mixture of one recorded assignment per iteration with weights `α_t / α`.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{DdmError, Result};
use crate::exec::{try_map_indexed, ExecMode};
use crate::linalg::{
    empirical_covariance, matrix_exponential, operator_norm, sym_eigen, Assignment, DesignMatrix,
    ProbabilityVector, SymmetricMatrix,
};
use crate::oracle::{OracleConfig, OraclePlan};
use crate::rng;

/// `‖M̃_t‖` below this counts as zero and the step is capped at `alpha_max`.
const ZERO_NORM: f64 = 1e-12;
/// Safety cap on the theoretical-mode loop.
const THEORETICAL_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwuConfig {
    pub epsilon: f64,
    /// `T`, the number of iterations in practical mode.
    pub iterations: usize,
    /// `N`, oracle samples per iteration used to estimate the covariance.
    pub cov_samples: usize,
    /// When set, run until `α ≥ 2 ln m / (ε η)` instead of `T` iterations.
    pub eta: Option<f64>,
    pub alpha_max: f64,
    pub exec: ExecMode,
}

impl Default for MwuConfig {
    fn default() -> Self {
        MwuConfig {
            epsilon: 0.2,
            iterations: 200,
            cov_samples: 50,
            eta: None,
            alpha_max: 10.0,
            exec: ExecMode::default(),
        }
    }
}

impl MwuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DdmError::invalid(format!("epsilon = {} is outside (0, 1)", self.epsilon)));
        }
        if self.iterations == 0 {
            return Err(DdmError::invalid("iterations must be positive"));
        }
        if self.cov_samples == 0 {
            return Err(DdmError::invalid("cov_samples must be positive"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(DdmError::invalid(format!("eta = {eta} must be positive")));
            }
        }
        if !(self.alpha_max > 0.0 && self.alpha_max.is_finite()) {
            return Err(DdmError::invalid("alpha_max must be positive"));
        }
        Ok(())
    }
}

/// Finite mixture over assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignDistribution {
    atoms: Vec<Assignment>,
    weights: Vec<f64>,
    step_sizes: Vec<f64>,
    total_weight: f64,
}

impl DesignDistribution {
    /// Builds the mixture with weights `α_t / α`.
    pub fn from_steps(atoms: Vec<Assignment>, step_sizes: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != step_sizes.len() {
            return Err(DdmError::invalid(format!(
                "{} atoms but {} step sizes",
                atoms.len(),
                step_sizes.len()
            )));
        }
        let n = atoms[0].len();
        if atoms.iter().any(|a| a.len() != n) {
            return Err(DdmError::invalid("atoms have different lengths"));
        }
        if step_sizes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(DdmError::invalid("step sizes must be positive and finite"));
        }
        let total_weight: f64 = step_sizes.iter().sum();
        let weights = step_sizes.iter().map(|a| a / total_weight).collect();
        Ok(DesignDistribution {
            atoms,
            weights,
            step_sizes,
            total_weight,
        })
    }

    pub fn atoms(&self) -> &[Assignment] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// `Σ_t p_t z_t`.
    pub fn mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.dim());
        for (z, &w) in self.atoms.iter().zip(&self.weights) {
            for (m, &zi) in mean.iter_mut().zip(z.as_slice()) {
                *m += w * zi as f64;
            }
        }
        mean
    }
}

/// Snapshot handed to the observer after every iteration.
#[derive(Debug, Clone)]
pub struct MwuState {
    pub iteration: usize,
    pub weight: SymmetricMatrix,
    pub log_accumulator: SymmetricMatrix,
    pub alpha: f64,
    pub alpha_step: f64,
    pub cov_norm: f64,
}

/// Runs the MWU loop. The rng only supplies a master seed; every oracle call
/// gets its own stream derived from `(seed, iteration, sample)`, so results
/// do not depend on `cfg.exec`.
pub fn mwu_build<R: Rng + ?Sized>(
    b: &DesignMatrix,
    p: &ProbabilityVector,
    cfg: &MwuConfig,
    oracle_cfg: &OracleConfig,
    rng: &mut R,
) -> Result<DesignDistribution> {
    mwu_build_observed(b, p, cfg, oracle_cfg, rng.next_u64(), |_| {})
}

/// [`mwu_build`] from an explicit seed, calling `observe` after each iteration.
pub fn mwu_build_observed<F>(
    b: &DesignMatrix,
    p: &ProbabilityVector,
    cfg: &MwuConfig,
    oracle_cfg: &OracleConfig,
    seed: u64,
    mut observe: F,
) -> Result<DesignDistribution>
where
    F: FnMut(&MwuState),
{
    cfg.validate()?;
    oracle_cfg.validate()?;
    if b.cols() != p.len() {
        return Err(DdmError::invalid(format!(
            "B has {} columns but p has length {}",
            b.cols(),
            p.len()
        )));
    }
    let m = b.rows();
    let z0 = p.center();
    let target = cfg
        .eta
        .map(|eta| 2.0 * (m as f64).ln() / (cfg.epsilon * eta));

    let mut weight = SymmetricMatrix::identity(m);
    let mut accumulator = SymmetricMatrix::zeros(m);
    let mut alpha = 0.0;
    let mut atoms = Vec::new();
    let mut steps = Vec::new();
    let mut t = 0usize;
    loop {
        let done = match target {
            None => t >= cfg.iterations,
            Some(goal) => t > 0 && alpha >= goal,
        };
        if done {
            break;
        }
        if t >= THEORETICAL_CAP {
            return Err(DdmError::Runaway { limit: THEORETICAL_CAP });
        }
        t += 1;

        let plan = OraclePlan::new(b, &weight, p, *oracle_cfg)?;
        let n_draws = cfg.cov_samples + 1;
        let mut draws = try_map_indexed(n_draws, cfg.exec, |k| {
            plan.sample(&mut rng::stream(seed, &[t as u64, k as u64]))
        })?;
        // the last draw is the recorded atom; it stays out of the estimate
        let atom = draws.pop().expect("at least two draws");
        let cov = empirical_covariance(&draws, b, &z0)?;
        let cov_norm = operator_norm(&cov)?;
        let step = if cov_norm < ZERO_NORM {
            cfg.alpha_max
        } else {
            (cfg.epsilon / (6.0 * cov_norm)).min(cfg.alpha_max)
        };
        alpha += step;
        let acc = accumulator.matrix() + cov.matrix() * step;
        accumulator = SymmetricMatrix::new(acc)?;
        weight = matrix_exponential(&accumulator)?;
        atoms.push(atom);
        steps.push(step);
        observe(&MwuState {
            iteration: t,
            weight: weight.clone(),
            log_accumulator: accumulator.clone(),
            alpha,
            alpha_step: step,
            cov_norm,
        });
    }
    DesignDistribution::from_steps(atoms, steps)
}

/// Draws one atom according to the mixture weights.
pub fn mwu_sample<R: Rng + ?Sized>(dist: &DesignDistribution, rng: &mut R) -> Assignment {
    if dist.len() == 1 {
        return dist.atoms[0].clone();
    }
    let index = WeightedIndex::new(&dist.weights).expect("weights are positive and finite");
    dist.atoms[index.sample(rng)].clone()
}

/// `‖Cov(Bz)‖` estimated from samples, centered at the known mean `z0`.
pub fn ddm_objective(samples: &[Assignment], b: &DesignMatrix, z0: &DVector<f64>) -> Result<f64> {
    Ok(ddm_objective_with_error(samples, b, z0)?.value)
}

/// Point estimate with a standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

/// [`ddm_objective`] with a delta-method standard error: along the top
/// eigenvector `v`, the estimate is the mean of `(vᵀB(z_k - z0))²`.
pub fn ddm_objective_with_error(samples: &[Assignment], b: &DesignMatrix, z0: &DVector<f64>) -> Result<Estimate> {
    if samples.len() < 2 {
        return Err(DdmError::invalid("the objective estimate needs at least two samples"));
    }
    let weights = vec![1.0 / samples.len() as f64; samples.len()];
    weighted_objective(samples, &weights, b, z0)
}

/// `‖Σ_t p_t B(z_t - z0)(z_t - z0)ᵀBᵀ‖` for a mixture, i.e. the exact
/// objective of the mixture around `z0`, with the delta-method error from
/// treating the atoms as independent draws.
pub fn distribution_objective(dist: &DesignDistribution, b: &DesignMatrix, z0: &DVector<f64>) -> Result<Estimate> {
    weighted_objective(&dist.atoms, &dist.weights, b, z0)
}

fn weighted_objective(samples: &[Assignment], weights: &[f64], b: &DesignMatrix, z0: &DVector<f64>) -> Result<Estimate> {
    let n = b.cols();
    if z0.len() != n {
        return Err(DdmError::invalid(format!("center has length {} but B has {n} columns", z0.len())));
    }
    if let Some(k) = samples.iter().position(|z| z.len() != n) {
        return Err(DdmError::invalid(format!(
            "sample {k} has length {} but B has {n} columns",
            samples[k].len()
        )));
    }
    let centered = DMatrix::from_fn(n, samples.len(), |i, k| samples[k].as_slice()[i] as f64 - z0[i]);
    let y = b.matrix() * centered;
    let mut scaled = y.clone();
    for (k, &w) in weights.iter().enumerate() {
        scaled.column_mut(k).scale_mut(w);
    }
    let cov = &scaled * y.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = sym_eigen(&cov)?;
    let (top, value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    let v = eig.eigenvectors.column(top);
    let proj = y.transpose() * v;
    let var: f64 = proj
        .iter()
        .zip(weights)
        .map(|(s, w)| w * w * (s * s - value).powi(2))
        .sum();
    Ok(Estimate {
        value,
        sigma: var.sqrt(),
    })
}

/// `‖B diag(4p(1-p)) Bᵀ‖`, the Bernoulli design's objective.
pub fn bernoulli_objective(b: &DesignMatrix, p: &ProbabilityVector) -> Result<f64> {
    if b.cols() != p.len() {
        return Err(DdmError::invalid(format!(
            "B has {} columns but p has length {}",
            b.cols(),
            p.len()
        )));
    }
    let bm = b.matrix();
    let d = p.bernoulli_variances();
    let cov = bm * DMatrix::from_diagonal(&d) * bm.transpose();
    operator_norm(&SymmetricMatrix::symmetrized(cov))
}

/// `(1 + ε)² min{f_B(Bernoulli), 1 + 1/ε}`, the guaranteed objective.
pub fn mwu_objective_bound(b: &DesignMatrix, p: &ProbabilityVector, epsilon: f64) -> Result<f64> {
    let bern = bernoulli_objective(b, p)?;
    Ok((1.0 + epsilon).powi(2) * bern.min(1.0 + 1.0 / epsilon))
}
