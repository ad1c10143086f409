//! The random-walk oracle: from `z0 = 2p - 1`, move along directions that are
//! orthogonal to the heavy rows of the alive submatrix and maximize the
//! quadratic form
//!
//! ```text
//! M_t = (1 + ε) diag(V_lᵀ W V_l) - V_lᵀ W V_l
//! ```
//!
//! with a zero-mean two-point step that pins at least one coordinate to ±1
//! per iteration. The endpoint is a corner of the cube with mean `z0`.
//!
//! [`classify_rows`] / [`update_direction`] / [`step_size`] are the literal
//! per-step operations. [`OraclePlan`] runs the same walk with the quadratic
//! form precomputed once per weight matrix; it is what the MWU loop uses.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};
use rand::Rng;

use crate::error::{DdmError, Result};
use crate::linalg::{sym_eigen, top_eigenpair, Assignment, DesignMatrix, ProbabilityVector, SymmetricMatrix};

/// Relative threshold for the rank decision on the big-row block.
const RANK_TOL: f64 = 1e-10;
/// Step lengths below this on both sides mean the walk cannot move.
const STALL_TOL: f64 = 1e-12;
/// Residual tolerance handed to the Lanczos solver.
const EIG_TOL: f64 = 1e-10;
pub const DEFAULT_KRYLOV_BUDGET: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub epsilon: f64,
    pub alive_tol: f64,
    pub max_iterations: usize,
    /// Krylov dimension cap for the top-eigenvector solve in each walk step.
    /// `usize::MAX` solves to convergence.
    pub krylov_budget: usize,
}

impl OracleConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        let cfg = OracleConfig {
            epsilon,
            ..OracleConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DdmError::invalid(format!(
                "epsilon = {} is outside (0, 1)",
                self.epsilon
            )));
        }
        if !(self.alive_tol > 0.0 && self.alive_tol <= 1e-6) {
            return Err(DdmError::invalid(format!(
                "alive tolerance {} is outside (0, 1e-6]",
                self.alive_tol
            )));
        }
        if self.krylov_budget < 2 {
            return Err(DdmError::invalid("krylov_budget must be at least 2"));
        }
        if self.max_iterations == 0 {
            return Err(DdmError::invalid("max_iterations must be positive"));
        }
        Ok(())
    }

    /// Squared-row-norm threshold separating big rows from light rows.
    pub fn big_row_threshold(&self) -> f64 {
        1.0 + 1.0 / self.epsilon
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            epsilon: 0.2,
            alive_tol: 1e-9,
            max_iterations: 1_000_000,
            krylov_budget: DEFAULT_KRYLOV_BUDGET,
        }
    }
}

/// Row split of the alive submatrix and the quadratic form built on the
/// light rows.
#[derive(Debug, Clone)]
pub struct RowPartition {
    pub big_rows: Vec<usize>,
    pub light_rows: Vec<usize>,
    /// `V_b`, big rows restricted to alive columns.
    pub big: DMatrix<f64>,
    /// `V_l`, light rows restricted to alive columns.
    pub light: DMatrix<f64>,
    /// `W` restricted to light rows and columns.
    pub weight_light: DMatrix<f64>,
    /// `M_t`, over the alive coordinates.
    pub quad_form: DMatrix<f64>,
}

/// Splits rows of `bsub` (B restricted to alive columns) at the strict
/// threshold `‖row‖² > 1 + 1/ε` and assembles `M_t`.
pub fn classify_rows(bsub: &DMatrix<f64>, w: &SymmetricMatrix, epsilon: f64) -> Result<RowPartition> {
    if w.dim() != bsub.nrows() {
        return Err(DdmError::invalid(format!(
            "W is {0}x{0} but B has {1} rows",
            w.dim(),
            bsub.nrows()
        )));
    }
    let threshold = 1.0 + 1.0 / epsilon;
    let (big_rows, light_rows): (Vec<usize>, Vec<usize>) =
        (0..bsub.nrows()).partition(|&j| bsub.row(j).norm_squared() > threshold);
    let big = bsub.select_rows(big_rows.iter());
    let light = bsub.select_rows(light_rows.iter());
    let weight_light = w.matrix().select_rows(light_rows.iter()).select_columns(light_rows.iter());
    let k = bsub.ncols();
    let quad_form = if light_rows.is_empty() {
        DMatrix::zeros(k, k)
    } else {
        let g = light.transpose() * &weight_light * &light;
        let mut m = -&g;
        for i in 0..k {
            m[(i, i)] += (1.0 + epsilon) * g[(i, i)];
        }
        (&m + m.transpose()) * 0.5
    };
    Ok(RowPartition {
        big_rows,
        light_rows,
        big,
        light,
        weight_light,
        quad_form,
    })
}

/// Orthonormal basis (as columns) of `{x : rows · x = 0}` where `rows` is
/// `b x k`. Householder QR with column pivoting on `rowsᵀ`.
pub(crate) fn null_space_basis(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let k = rows.ncols();
    let b = rows.nrows();
    if b == 0 {
        return DMatrix::identity(k, k);
    }
    let mut a = rows.transpose(); // k x b
    let mut col_norms: Vec<f64> = (0..b).map(|j| a.column(j).norm_squared()).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let steps = b.min(k);
    let mut first_diag = 0.0f64;
    for s in 0..steps {
        // pivot: largest remaining column norm
        let (piv, &pn) = col_norms[s..]
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .map(|(i, v)| (i + s, v))
            .unwrap();
        if piv != s {
            a.swap_columns(s, piv);
            col_norms.swap(s, piv);
        }
        let x: Vec<f64> = a.view((s, s), (k - s, 1)).iter().copied().collect();
        let alpha = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s == 0 {
            first_diag = alpha;
        }
        if alpha <= RANK_TOL * first_diag.max(1.0) || pn <= 0.0 {
            break;
        }
        let mut v = x;
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v.iter_mut().for_each(|t| *t /= vn);
        // apply H = I - 2vvᵀ to trailing columns
        for c in s..b {
            let mut col = a.view_mut((s, c), (k - s, 1));
            let d: f64 = col.iter().zip(&v).map(|(p, q)| p * q).sum();
            for (p, q) in col.iter_mut().zip(&v) {
                *p -= 2.0 * d * q;
            }
        }
        for (c, norm) in col_norms.iter_mut().enumerate().take(b).skip(s + 1) {
            *norm = a.view((s + 1, c), (k - s - 1, 1)).norm_squared();
        }
        reflectors.push(v);
    }
    let rank = reflectors.len();
    let mut basis = DMatrix::zeros(k, k - rank);
    for (out, j) in (rank..k).enumerate() {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        for (s, v) in reflectors.iter().enumerate().rev() {
            let d: f64 = e[s..].iter().zip(v).map(|(p, q)| p * q).sum();
            for (p, q) in e[s..].iter_mut().zip(v) {
                *p -= 2.0 * d * q;
            }
        }
        basis.column_mut(out).copy_from_slice(&e);
    }
    basis
}

/// Unit direction `y` supported on `alive`: the top eigenvector of `M_t`
/// over the null space of the big rows. Dense reference implementation.
pub fn update_direction(partition: &RowPartition, alive: &[usize], n: usize) -> Result<Vec<f64>> {
    let k = alive.len();
    if k == 0 {
        return Err(DdmError::invalid("update direction needs a non-empty alive set"));
    }
    if partition.quad_form.nrows() != k {
        return Err(DdmError::invalid("partition does not match the alive set"));
    }
    let q = null_space_basis(&partition.big);
    if q.ncols() == 0 {
        return Err(DdmError::DegenerateState {
            alive: k,
            big: partition.big_rows.len(),
        });
    }
    let projected = q.transpose() * &partition.quad_form * &q;
    let projected = (&projected + projected.transpose()) * 0.5;
    let eig = sym_eigen(&projected)?;
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] + 1e-10 {
            best = i;
        }
    }
    let ya = &q * eig.eigenvectors.column(best);
    let norm = ya.norm();
    let mut y = vec![0.0; n];
    for (pos, &i) in alive.iter().enumerate() {
        y[i] = ya[pos] / norm;
    }
    Ok(y)
}

/// Largest `γ ≥ 0` keeping `z + γ y` in the cube, and the same for `-y`.
pub fn step_bounds(z: &[f64], y: &[f64]) -> (f64, f64) {
    let mut plus = f64::INFINITY;
    let mut minus = f64::INFINITY;
    for (&zi, &yi) in z.iter().zip(y) {
        if yi > 0.0 {
            plus = plus.min((1.0 - zi) / yi);
            minus = minus.min((1.0 + zi) / yi);
        } else if yi < 0.0 {
            plus = plus.min((-1.0 - zi) / yi);
            minus = minus.min((zi - 1.0) / yi);
        }
    }
    (plus.max(0.0), minus.max(0.0))
}

/// Zero-mean random step: `+γ₊` with probability `γ₋/(γ₊+γ₋)`, else `-γ₋`.
pub fn step_size<R: Rng + ?Sized>(z: &[f64], y: &[f64], rng: &mut R) -> Result<f64> {
    let (plus, minus) = step_bounds(z, y);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(DdmError::invalid("step direction is zero"));
    }
    if plus < STALL_TOL && minus < STALL_TOL {
        return Err(DdmError::StalledWalk { threshold: STALL_TOL });
    }
    let u: f64 = rng.random();
    Ok(if u < minus / (plus + minus) { plus } else { -minus })
}

/// Walk inputs that do not change between samples: the matrix, weights,
/// center, and the light-row quadratic form for the initial alive set.
#[derive(Debug, Clone)]
pub struct OraclePlan {
    b: DMatrix<f64>,
    w: DMatrix<f64>,
    z0: Vec<f64>,
    cfg: OracleConfig,
    initial_alive: Vec<usize>,
    initial_big: Vec<bool>,
    /// Light-row quadratic form for the initial light set `L`.
    initial_form: LightForm,
}

impl OraclePlan {
    pub fn new(b: &DesignMatrix, w: &SymmetricMatrix, p: &ProbabilityVector, cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        if b.cols() != p.len() {
            return Err(DdmError::invalid(format!(
                "B has {} columns but p has length {}",
                b.cols(),
                p.len()
            )));
        }
        if w.dim() != b.rows() {
            return Err(DdmError::invalid(format!(
                "W is {0}x{0} but B has {1} rows",
                w.dim(),
                b.rows()
            )));
        }
        if w.matrix().clone().cholesky().is_none() {
            return Err(DdmError::invalid("weight matrix W is not positive definite"));
        }
        let z0: Vec<f64> = p.center().iter().copied().collect();
        let initial_alive: Vec<usize> = (0..z0.len())
            .filter(|&i| z0[i].abs() < 1.0 - cfg.alive_tol)
            .collect();
        let bm = b.matrix();
        let threshold = cfg.big_row_threshold();
        let initial_big: Vec<bool> = (0..bm.nrows())
            .map(|j| initial_alive.iter().map(|&i| bm[(j, i)].powi(2)).sum::<f64>() > threshold)
            .collect();
        let initial_form = LightForm::new(bm, w.matrix(), &initial_big)?;
        Ok(OraclePlan {
            b: bm.clone(),
            w: w.matrix().clone(),
            z0,
            cfg,
            initial_alive,
            initial_big,
            initial_form,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn center(&self) -> &[f64] {
        &self.z0
    }

    pub fn walk(&self) -> OracleWalk<'_> {
        let mut z = self.z0.clone();
        for (i, zi) in z.iter_mut().enumerate() {
            if !self.initial_alive.contains(&i) {
                *zi = zi.signum();
            }
        }
        OracleWalk {
            plan: self,
            z,
            alive: self.initial_alive.clone(),
            big: self.initial_big.clone(),
            form: Cow::Borrowed(&self.initial_form),
            prev_direction: None,
            iterations: 0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Assignment> {
        let mut walk = self.walk();
        walk.run(rng)?;
        Ok(walk.assignment())
    }
}

/// `G = B_Lᵀ W_LL B_L` over all columns, together with a factor `C` with
/// `CᵀC = G` (`C = LᵀB_L` for the Cholesky factor `W_LL = LLᵀ`). The factor
/// gives a cheaper mat-vec when there are fewer light rows than alive columns.
#[derive(Debug, Clone)]
struct LightForm {
    gram: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl LightForm {
    fn new(b: &DMatrix<f64>, w: &DMatrix<f64>, big: &[bool]) -> Result<Self> {
        let light: Vec<usize> = (0..b.nrows()).filter(|&j| !big[j]).collect();
        if light.is_empty() {
            return Ok(LightForm {
                gram: DMatrix::zeros(b.ncols(), b.ncols()),
                factor: DMatrix::zeros(0, b.ncols()),
            });
        }
        let bl = b.select_rows(light.iter());
        let wl = w.select_rows(light.iter()).select_columns(light.iter());
        let chol = wl
            .cholesky()
            .ok_or_else(|| DdmError::Numerical("light block of W is not positive definite".into()))?;
        let factor = chol.l().transpose() * bl;
        let gram = factor.transpose() * &factor;
        Ok(LightForm { gram, factor })
    }
}

/// One in-progress oracle walk.
#[derive(Debug, Clone)]
pub struct OracleWalk<'a> {
    plan: &'a OraclePlan,
    z: Vec<f64>,
    alive: Vec<usize>,
    big: Vec<bool>,
    form: Cow<'a, LightForm>,
    prev_direction: Option<Vec<f64>>,
    iterations: usize,
}

impl OracleWalk<'_> {
    pub fn position(&self) -> &[f64] {
        &self.z
    }

    pub fn alive(&self) -> &[usize] {
        &self.alive
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_finished(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn big_rows(&self) -> Vec<usize> {
        (0..self.big.len()).filter(|&j| self.big[j]).collect()
    }

    /// Current update direction (length `n`, zero off the alive set).
    pub fn direction(&mut self) -> Result<Vec<f64>> {
        let plan = self.plan;
        let k = self.alive.len();
        let n = self.z.len();
        let eps = plan.cfg.epsilon;
        let budget = plan.cfg.krylov_budget;

        let big_rows = self.big_rows();
        let q = if big_rows.is_empty() {
            None
        } else {
            let vb = DMatrix::from_fn(big_rows.len(), k, |r, c| plan.b[(big_rows[r], self.alive[c])]);
            let q = null_space_basis(&vb);
            if q.ncols() == 0 {
                return Err(DdmError::DegenerateState {
                    alive: k,
                    big: big_rows.len(),
                });
            }
            Some(q)
        };

        let form = &*self.form;
        let alive = &self.alive;
        let diag: Vec<f64> = alive.iter().map(|&i| (1.0 + eps) * form.gram[(i, i)]).collect();
        let r = form.factor.nrows();
        // M x = (1 + ε) diag(G) x - G x, with G applied densely or through C
        let (dense, factor) = if 2 * r < k {
            (None, Some(form.factor.select_columns(alive.iter())))
        } else {
            (Some(DMatrix::from_fn(k, k, |a, c| form.gram[(alive[a], alive[c])])), None)
        };
        let mut tmp = DVector::zeros(r);
        let mut apply_m = |x: &[f64], out: &mut [f64]| {
            let xv = DVectorView::from_slice(x, k);
            let mut ov = DVectorViewMut::from_slice(out, k);
            match (&dense, &factor) {
                (Some(h), _) => ov.gemv(-1.0, h, &xv, 0.0),
                (_, Some(c)) => {
                    tmp.gemv(1.0, c, &xv, 0.0);
                    ov.gemv_tr(-1.0, c, &tmp, 0.0);
                }
                _ => unreachable!(),
            }
            for i in 0..k {
                out[i] += diag[i] * x[i];
            }
        };

        let warm: Option<Vec<f64>> = self.prev_direction.as_ref().map(|prev| {
            let restricted = DVector::from_iterator(k, alive.iter().map(|&i| prev[i]));
            match &q {
                Some(q) => (q.transpose() * restricted).iter().copied().collect(),
                None => restricted.iter().copied().collect(),
            }
        });

        let ya: DVector<f64> = match &q {
            None => {
                let top = top_eigenpair(k, &mut apply_m, warm.as_deref(), EIG_TOL, budget)?;
                DVector::from_vec(top.vector)
            }
            Some(q) => {
                let mut full = DVector::zeros(k);
                let mut mapped = DVector::zeros(k);
                let top = top_eigenpair(
                    q.ncols(),
                    |x, y| {
                        full.gemv(1.0, q, &DVectorView::from_slice(x, x.len()), 0.0);
                        apply_m(full.as_slice(), mapped.as_mut_slice());
                        DVectorViewMut::from_slice(y, x.len()).gemv_tr(1.0, q, &mapped, 0.0);
                    },
                    warm.as_deref(),
                    EIG_TOL,
                    budget,
                )?;
                q * DVector::from_vec(top.vector)
            }
        };
        let norm = ya.norm();
        let mut y = vec![0.0; n];
        for (pos, &i) in self.alive.iter().enumerate() {
            y[i] = ya[pos] / norm;
        }
        Ok(y)
    }

    /// Advances one iteration. Returns `false` once every coordinate is pinned.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        if self.alive.is_empty() {
            return Ok(false);
        }
        if self.iterations >= self.plan.cfg.max_iterations {
            return Err(DdmError::Runaway {
                limit: self.plan.cfg.max_iterations,
            });
        }
        let y = self.direction()?;
        let gamma = step_size(&self.z, &y, rng)?;
        let tol = self.plan.cfg.alive_tol;
        for &i in &self.alive {
            let v = (self.z[i] + gamma * y[i]).clamp(-1.0, 1.0);
            self.z[i] = if 1.0 - v.abs() <= tol { v.signum() } else { v };
        }
        self.iterations += 1;
        self.prev_direction = Some(y);
        self.refresh_alive()?;
        Ok(!self.alive.is_empty())
    }

    fn refresh_alive(&mut self) -> Result<()> {
        let z = &self.z;
        self.alive.retain(|&i| z[i].abs() < 1.0);
        let plan = self.plan;
        let threshold = plan.cfg.big_row_threshold();
        let mut changed = false;
        for j in 0..self.big.len() {
            if self.big[j] {
                let norm2: f64 = self.alive.iter().map(|&i| plan.b[(j, i)].powi(2)).sum();
                if norm2 <= threshold {
                    self.big[j] = false;
                    changed = true;
                }
            }
        }
        if changed {
            self.form = Cow::Owned(LightForm::new(&plan.b, &plan.w, &self.big)?);
        }
        Ok(())
    }

    pub fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        while self.step(rng)? {}
        Ok(())
    }

    pub fn assignment(&self) -> Assignment {
        Assignment::from_corner(&self.z)
    }
}

/// One oracle draw.
pub fn oracle_sample<R: Rng + ?Sized>(
    b: &DesignMatrix,
    w: &SymmetricMatrix,
    p: &ProbabilityVector,
    cfg: &OracleConfig,
    rng: &mut R,
) -> Result<Assignment> {
    OraclePlan::new(b, w, p, *cfg)?.sample(rng)
}

/// `U_W = <B diag(4p(1-p)) Bᵀ, W>`, the Bernoulli design's weighted objective.
pub fn weighted_bernoulli_objective(b: &DesignMatrix, w: &SymmetricMatrix, p: &ProbabilityVector) -> f64 {
    let bm = b.matrix();
    let d = p.bernoulli_variances();
    let scaled = bm * DMatrix::from_diagonal(&d);
    let cov = scaled * bm.transpose();
    cov.dot(w.matrix())
}
