//! Benchmark assignment designs: Bernoulli, complete randomization,
//! randomized blocks, rerandomization and the Gram-Schmidt walk.
//!
//! Complete randomization, blocking and rerandomization need a homogeneous
//! `p`; group sizes are `round(n p)` with ties to even.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::error::{DdmError, Result};
use crate::linalg::{sym_eigen, Assignment, DesignMatrix, ProbabilityVector};
use crate::mwu::{mwu_sample, DesignDistribution};
use crate::oracle::step_size;

/// Coordinates this close to ±1 are frozen and snapped.
const ALIVE_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;
/// Ridge added to the covariate covariance before inverting it.
pub const MAHALANOBIS_RIDGE: f64 = 1e-8;
pub const MAX_RERAND_DRAWS: usize = 10_000_000;
pub const DEFAULT_PILOT_DRAWS: usize = 100_000;
pub const DEFAULT_ACCEPT_PROB: f64 = 0.001;
pub const DEFAULT_BLOCK_SIZE: usize = 20;

/// `round(n p)` with ties to even.
pub fn treated_count(n: usize, p: f64) -> usize {
    (n as f64 * p).round_ties_even() as usize
}

fn homogeneous(p: &ProbabilityVector, design: &str) -> Result<f64> {
    p.homogeneous().ok_or_else(|| {
        DdmError::UnsupportedDesign(format!("{design} needs a homogeneous probability vector"))
    })
}

pub fn bernoulli_sample<R: Rng + ?Sized>(p: &ProbabilityVector, rng: &mut R) -> Assignment {
    let z = p
        .as_slice()
        .iter()
        .map(|&pi| if rng.random::<f64>() < pi { 1 } else { -1 })
        .collect();
    Assignment::new(z).expect("entries are ±1")
}

/// Exactly `round(n p)` treated units, uniform over subsets of that size.
pub fn complete_randomization_sample<R: Rng + ?Sized>(p: &ProbabilityVector, rng: &mut R) -> Result<Assignment> {
    let q = homogeneous(p, "complete randomization")?;
    let n = p.len();
    Ok(fixed_size_sample(n, treated_count(n, q), rng))
}

fn fixed_size_sample<R: Rng + ?Sized>(n: usize, treated: usize, rng: &mut R) -> Assignment {
    let mut z = vec![-1i8; n];
    for i in index::sample(rng, n, treated) {
        z[i] = 1;
    }
    Assignment::new(z).expect("entries are ±1")
}

/// Randomized blocks on the first two covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDesign {
    blocks: Vec<Vec<usize>>,
    treated: Vec<usize>,
    n: usize,
}

impl BlockDesign {
    /// Sorts units by covariate 0; within consecutive groups of
    /// `2 * block_size` sorts by covariate 1 and cuts blocks of `block_size`.
    /// A short final block is merged into the one before it.
    pub fn new(x: &DMatrix<f64>, p: f64, block_size: usize) -> Result<Self> {
        let n = x.nrows();
        if x.ncols() < 2 {
            return Err(DdmError::invalid("block design needs at least two covariates"));
        }
        if block_size == 0 || block_size > n {
            return Err(DdmError::invalid(format!("block size {block_size} must be in 1..={n}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(DdmError::invalid(format!("p = {p} is outside (0, 1)")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[(a, 0)].total_cmp(&x[(b, 0)]).then(a.cmp(&b)));
        for group in order.chunks_mut(2 * block_size) {
            group.sort_by(|&a, &b| x[(a, 1)].total_cmp(&x[(b, 1)]).then(a.cmp(&b)));
        }
        let mut blocks: Vec<Vec<usize>> = order.chunks(block_size).map(<[usize]>::to_vec).collect();
        if blocks.len() > 1 && blocks.last().is_some_and(|b| b.len() < block_size) {
            let tail = blocks.pop().expect("non-empty");
            blocks.last_mut().expect("non-empty").extend(tail);
        }
        let treated = blocks.iter().map(|b| treated_count(b.len(), p)).collect();
        Ok(BlockDesign { blocks, treated, n })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn treated_per_block(&self) -> &[usize] {
        &self.treated
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let mut z = vec![-1i8; self.n];
        for (block, &k) in self.blocks.iter().zip(&self.treated) {
            for j in index::sample(rng, block.len(), k) {
                z[block[j]] = 1;
            }
        }
        Assignment::new(z).expect("entries are ±1")
    }
}

pub fn randomized_block_sample<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    p: f64,
    block_size: usize,
    rng: &mut R,
) -> Result<Assignment> {
    Ok(BlockDesign::new(x, p, block_size)?.sample(rng))
}

/// Complete randomization conditioned on a small Mahalanobis imbalance.
#[derive(Debug, Clone)]
pub struct Rerandomizer {
    /// Covariates whitened by the Cholesky factor of the sample covariance.
    whitened: DMatrix<f64>,
    treated: usize,
    threshold: f64,
}

impl Rerandomizer {
    /// Sets the acceptance threshold at the `accept_prob` quantile of the
    /// imbalance over `pilot_draws` complete-randomization candidates.
    pub fn new<R: Rng + ?Sized>(
        x: &DMatrix<f64>,
        p: f64,
        accept_prob: f64,
        pilot_draws: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = x.nrows();
        if n < 2 || x.ncols() == 0 {
            return Err(DdmError::invalid("rerandomization needs n >= 2 units and covariates"));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(DdmError::invalid(format!("p = {p} is outside (0, 1)")));
        }
        if !(accept_prob > 0.0 && accept_prob <= 1.0) {
            return Err(DdmError::invalid(format!("acceptance probability {accept_prob} is outside (0, 1]")));
        }
        if pilot_draws == 0 {
            return Err(DdmError::invalid("pilot draws must be positive"));
        }
        let treated = treated_count(n, p);
        if treated == 0 || treated == n {
            return Err(DdmError::invalid(format!("round(n p) = {treated} leaves an empty group")));
        }
        let d = x.ncols();
        let mean = x.row_mean();
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let mut cov = centered.transpose() * &centered / (n - 1) as f64;
        for k in 0..d {
            cov[(k, k)] += MAHALANOBIS_RIDGE;
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| DdmError::Numerical("covariate covariance is not positive definite".into()))?;
        // rows of x L^{-T}, so that δᵀ S⁻¹ δ = ‖δ̃‖²
        let whitened = chol
            .l()
            .solve_lower_triangular(&centered.transpose())
            .ok_or_else(|| DdmError::Numerical("singular Cholesky factor".into()))?
            .transpose();
        let mut design = Rerandomizer {
            whitened,
            treated,
            threshold: f64::INFINITY,
        };
        if accept_prob < 1.0 {
            let mut pilot: Vec<f64> = (0..pilot_draws)
                .map(|_| design.imbalance(&design.candidate(rng)))
                .collect();
            let rank = ((accept_prob * pilot_draws as f64).ceil() as usize).clamp(1, pilot_draws);
            let (_, kth, _) = pilot.select_nth_unstable_by(rank - 1, f64::total_cmp);
            design.threshold = *kth;
        }
        Ok(design)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn treated(&self) -> usize {
        self.treated
    }

    fn candidate<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        fixed_size_sample(self.whitened.nrows(), self.treated, rng)
    }

    /// `(n_T n_C / n) (x̄_T - x̄_C)ᵀ S⁻¹ (x̄_T - x̄_C)`.
    pub fn imbalance(&self, z: &Assignment) -> f64 {
        let n = self.whitened.nrows();
        let nt = z.treated();
        let nc = n - nt;
        if nt == 0 || nc == 0 {
            return f64::INFINITY;
        }
        // both sums accumulate in index order, so z and -z give bitwise
        // mirrored sums and ties at the threshold stay symmetric
        let mut sum_t = DVector::zeros(self.whitened.ncols());
        let mut sum_c = DVector::zeros(self.whitened.ncols());
        for (i, &zi) in z.as_slice().iter().enumerate() {
            if zi > 0 {
                sum_t += self.whitened.row(i).transpose();
            } else {
                sum_c += self.whitened.row(i).transpose();
            }
        }
        let delta = &sum_t / nt as f64 - &sum_c / nc as f64;
        (nt * nc) as f64 / n as f64 * delta.norm_squared()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Assignment> {
        for _ in 0..MAX_RERAND_DRAWS {
            let z = self.candidate(rng);
            if self.imbalance(&z) <= self.threshold {
                return Ok(z);
            }
        }
        Err(DdmError::AcceptanceStall { draws: MAX_RERAND_DRAWS })
    }
}

pub fn rerandomization_sample<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    p: f64,
    accept_prob: f64,
    pilot_draws: usize,
    rng: &mut R,
) -> Result<Assignment> {
    Rerandomizer::new(x, p, accept_prob, pilot_draws, rng)?.sample(rng)
}

/// Gram-Schmidt walk from the fractional start `z0 = 2p - 1`.
#[derive(Debug, Clone)]
pub struct GswDesign {
    b: DMatrix<f64>,
    gram: DMatrix<f64>,
    z0: DVector<f64>,
    random_pivot: bool,
}

impl GswDesign {
    pub fn new(b: &DesignMatrix, p: &ProbabilityVector) -> Result<Self> {
        if b.cols() != p.len() {
            return Err(DdmError::invalid(format!(
                "B has {} columns but p has length {}",
                b.cols(),
                p.len()
            )));
        }
        let bm = b.matrix().clone();
        let gram = bm.transpose() * &bm;
        Ok(GswDesign {
            b: bm,
            gram,
            z0: p.center(),
            random_pivot: true,
        })
    }

    /// With `false`, a frozen pivot is replaced by the alive unit with the
    /// largest index instead of a uniformly random one.
    pub fn with_random_pivot(mut self, random_pivot: bool) -> Self {
        self.random_pivot = random_pivot;
        self
    }

    /// `u` with `u(pivot) = 1`, zero off the alive set, minimizing `‖B u‖`;
    /// ties are broken by the minimum-norm solution.
    fn direction(&self, alive: &[usize], pivot: usize) -> Result<DVector<f64>> {
        let n = self.b.ncols();
        let others: Vec<usize> = alive.iter().copied().filter(|&i| i != pivot).collect();
        let mut u = DVector::zeros(n);
        u[pivot] = 1.0;
        let k = others.len();
        if k == 0 {
            return Ok(u);
        }
        let m = self.b.nrows();
        let v = if k >= m {
            // v = -B_Aᵀ (B_A B_Aᵀ)⁺ b_p
            let ba = self.b.select_columns(&others);
            let kmat = &ba * ba.transpose();
            let w = psd_solve(kmat, self.b.column(pivot).into_owned())?;
            -(ba.transpose() * w)
        } else {
            // v = -(B_Aᵀ B_A)⁺ B_Aᵀ b_p
            let g = DMatrix::from_fn(k, k, |r, c| self.gram[(others[r], others[c])]);
            let rhs = DVector::from_fn(k, |r, _| self.gram[(others[r], pivot)]);
            -psd_solve(g, rhs)?
        };
        for (&i, &vi) in others.iter().zip(v.iter()) {
            u[i] = vi;
        }
        Ok(u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Assignment> {
        let n = self.z0.len();
        let mut z = self.z0.clone();
        let mut alive: Vec<usize> = (0..n).filter(|&i| z[i].abs() < 1.0 - ALIVE_TOL).collect();
        let mut pivot: Option<usize> = None;
        let mut steps = 0usize;
        while !alive.is_empty() {
            steps += 1;
            if steps > n + 1 {
                return Err(DdmError::Runaway { limit: n + 1 });
            }
            let p = match pivot {
                Some(p) if alive.contains(&p) => p,
                _ => {
                    let p = if self.random_pivot {
                        alive[rng.random_range(0..alive.len())]
                    } else {
                        *alive.last().expect("alive is non-empty")
                    };
                    pivot = Some(p);
                    p
                }
            };
            let u = self.direction(&alive, p)?;
            let delta = step_size(z.as_slice(), u.as_slice(), rng)?;
            for &i in &alive {
                z[i] = (z[i] + delta * u[i]).clamp(-1.0, 1.0);
                if z[i].abs() >= 1.0 - ALIVE_TOL {
                    z[i] = z[i].signum();
                }
            }
            alive.retain(|&i| z[i].abs() < 1.0);
        }
        Ok(Assignment::from_corner(z.as_slice()))
    }
}

/// Solves `A x = b` for symmetric PSD `A`, falling back to the
/// pseudo-inverse when `A` is singular.
fn psd_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.diagonal().amax();
    if let Some(chol) = a.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v * v));
        if min_pivot > 1e-8 * scale.max(f64::MIN_POSITIVE) {
            return Ok(chol.solve(&b));
        }
    }
    let eig = sym_eigen(&a)?;
    let cut = RANK_TOL * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let coords = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_fn(coords.len(), |i, _| {
        let l = eig.eigenvalues[i];
        if l > cut {
            coords[i] / l
        } else {
            0.0
        }
    });
    Ok(&eig.eigenvectors * scaled)
}

pub fn gsw_sample<R: Rng + ?Sized>(b: &DesignMatrix, p: &ProbabilityVector, rng: &mut R) -> Result<Assignment> {
    GswDesign::new(b, p)?.sample(rng)
}

/// Names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DesignKind {
    Mwu,
    Gsw,
    Bernoulli,
    Complete,
    Block,
    Rerand,
}

impl DesignKind {
    pub const ALL: [DesignKind; 6] = [
        DesignKind::Mwu,
        DesignKind::Gsw,
        DesignKind::Bernoulli,
        DesignKind::Complete,
        DesignKind::Block,
        DesignKind::Rerand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Mwu => "mwu",
            DesignKind::Gsw => "gsw",
            DesignKind::Bernoulli => "bernoulli",
            DesignKind::Complete => "complete",
            DesignKind::Block => "block",
            DesignKind::Rerand => "rerand",
        }
    }

    /// Whether the design takes the augmented matrix parameter `phi`.
    pub fn uses_phi(self) -> bool {
        matches!(self, DesignKind::Mwu | DesignKind::Gsw)
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = DdmError;

    fn from_str(s: &str) -> Result<Self> {
        DesignKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| DdmError::invalid(format!("unknown design '{s}'")))
    }
}

/// A design with any build phase already done, ready to sample.
#[derive(Debug, Clone)]
pub enum BuiltDesign {
    Bernoulli(ProbabilityVector),
    Complete { n: usize, treated: usize },
    Block(BlockDesign),
    Rerand(Rerandomizer),
    Gsw(GswDesign),
    Mwu(DesignDistribution),
}

impl BuiltDesign {
    pub fn complete(p: &ProbabilityVector) -> Result<Self> {
        let q = homogeneous(p, "complete randomization")?;
        Ok(BuiltDesign::Complete {
            n: p.len(),
            treated: treated_count(p.len(), q),
        })
    }

    pub fn block(x: &DMatrix<f64>, p: &ProbabilityVector, block_size: usize) -> Result<Self> {
        let q = homogeneous(p, "block randomization")?;
        if x.nrows() != p.len() {
            return Err(DdmError::invalid("covariates and p disagree on n"));
        }
        Ok(BuiltDesign::Block(BlockDesign::new(x, q, block_size)?))
    }

    pub fn rerand<R: Rng + ?Sized>(
        x: &DMatrix<f64>,
        p: &ProbabilityVector,
        accept_prob: f64,
        pilot_draws: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let q = homogeneous(p, "rerandomization")?;
        if x.nrows() != p.len() {
            return Err(DdmError::invalid("covariates and p disagree on n"));
        }
        Ok(BuiltDesign::Rerand(Rerandomizer::new(x, q, accept_prob, pilot_draws, rng)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Assignment> {
        match self {
            BuiltDesign::Bernoulli(p) => Ok(bernoulli_sample(p, rng)),
            BuiltDesign::Complete { n, treated } => Ok(fixed_size_sample(*n, *treated, rng)),
            BuiltDesign::Block(d) => Ok(d.sample(rng)),
            BuiltDesign::Rerand(d) => d.sample(rng),
            BuiltDesign::Gsw(d) => d.sample(rng),
            BuiltDesign::Mwu(d) => Ok(mwu_sample(d, rng)),
        }
    }
}
