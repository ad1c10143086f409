//! Reductions from (3,2-2) Set-Splitting to DDM instances.
//!
//! Two gadgets: one for `p = 1/2` whose columns are `{0, ±1}` patterns
//! scaled by `1/√3`, and one for three distinct probability levels built
//! from the incidence matrix and the centering projection. For satisfiable
//! instances both admit a feasible design with `Cov(Bz) = 0`; everything
//! here verifies those identities exactly, in integers or rationals.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{DdmError, Result};
use crate::linalg::{DesignMatrix, ProbabilityVector};

pub const SET_SIZE: usize = 4;
pub const MAX_MULTIPLICITY: usize = 3;

/// A universe `{0, .., n-1}` and 4-element sets, each element in at most
/// three sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetSplittingInstance {
    n: usize,
    sets: Vec<[usize; SET_SIZE]>,
}

impl SetSplittingInstance {
    /// Sets use 0-based element indices.
    pub fn new(n: usize, sets: Vec<[usize; SET_SIZE]>) -> Result<Self> {
        if n == 0 {
            return Err(DdmError::invalid("universe is empty"));
        }
        let mut count = vec![0usize; n];
        for (j, set) in sets.iter().enumerate() {
            for (a, &e) in set.iter().enumerate() {
                if e >= n {
                    return Err(DdmError::invalid(format!("set {j} names element {e} outside the universe")));
                }
                if set[..a].contains(&e) {
                    return Err(DdmError::invalid(format!("set {j} repeats element {e}")));
                }
                count[e] += 1;
            }
        }
        if let Some(e) = count.iter().position(|&c| c > MAX_MULTIPLICITY) {
            return Err(DdmError::invalid(format!("element {e} appears in {} sets", count[e])));
        }
        Ok(SetSplittingInstance { n, sets })
    }

    /// Reads `n m` then `m` lines of four 1-based indices.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (row, header) = lines.next().ok_or_else(|| DdmError::invalid("empty instance file"))?;
        let head = parse_numbers(header, row)?;
        if head.len() != 2 {
            return Err(DdmError::Parse {
                row,
                col: 1,
                msg: "expected 'n m'".into(),
            });
        }
        let (n, m) = (head[0], head[1]);
        let mut sets = Vec::with_capacity(m);
        for (row, line) in lines.by_ref().take(m) {
            let nums = parse_numbers(line, row)?;
            if nums.len() != SET_SIZE {
                return Err(DdmError::Parse {
                    row,
                    col: 1,
                    msg: format!("expected {SET_SIZE} indices, found {}", nums.len()),
                });
            }
            if let Some(c) = nums.iter().position(|&e| e == 0) {
                return Err(DdmError::Parse {
                    row,
                    col: c + 1,
                    msg: "indices are 1-based".into(),
                });
            }
            sets.push([nums[0] - 1, nums[1] - 1, nums[2] - 1, nums[3] - 1]);
        }
        if sets.len() != m {
            return Err(DdmError::invalid(format!("header promises {m} sets, found {}", sets.len())));
        }
        if let Some((row, _)) = lines.next() {
            return Err(DdmError::Parse {
                row,
                col: 1,
                msg: "trailing content after the last set".into(),
            });
        }
        SetSplittingInstance::new(n, sets)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.sets.len());
        for s in &self.sets {
            let _ = writeln!(out, "{} {} {} {}", s[0] + 1, s[1] + 1, s[2] + 1, s[3] + 1);
        }
        out
    }

    pub fn universe_size(&self) -> usize {
        self.n
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn sets(&self) -> &[[usize; SET_SIZE]] {
        &self.sets
    }

    /// `A_i`: indices of the sets containing each element.
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        let mut member = vec![Vec::new(); self.n];
        for (j, set) in self.sets.iter().enumerate() {
            for &e in set {
                member[e].push(j);
            }
        }
        member
    }

    /// `m x n` 0/1 incidence matrix.
    pub fn incidence(&self) -> Vec<Vec<i64>> {
        let mut a = vec![vec![0i64; self.n]; self.sets.len()];
        for (j, set) in self.sets.iter().enumerate() {
            for &e in set {
                a[j][e] = 1;
            }
        }
        a
    }

    /// Number of sets whose signed element sum is nonzero.
    pub fn unsplit_count(&self, y: &[i8]) -> Result<usize> {
        check_signs(y, self.n)?;
        Ok(self
            .sets
            .iter()
            .filter(|s| s.iter().map(|&e| y[e] as i32).sum::<i32>() != 0)
            .count())
    }

    /// Minimum of [`unsplit_count`](Self::unsplit_count) over all `2^n`
    /// sign vectors, with a minimizer.
    pub fn min_unsplit_exhaustive(&self) -> Result<(usize, Vec<i8>)> {
        if self.n > 24 {
            return Err(DdmError::invalid(format!("exhaustive search over 2^{} assignments", self.n)));
        }
        let masks: Vec<u32> = self
            .sets
            .iter()
            .map(|s| s.iter().fold(0u32, |acc, &e| acc | 1 << e))
            .collect();
        let mut best = (usize::MAX, 0u32);
        for bits in 0u32..(1u32 << self.n) {
            // a set splits when exactly two of its elements are +1
            let unsplit = masks.iter().filter(|&&m| (bits & m).count_ones() != 2).count();
            if unsplit < best.0 {
                best = (unsplit, bits);
                if unsplit == 0 {
                    break;
                }
            }
        }
        let y = (0..self.n).map(|i| if best.1 >> i & 1 == 1 { 1 } else { -1 }).collect();
        Ok((best.0, y))
    }

    /// A random instance together with a splitting witness. Every element
    /// lies in at least one set, so all three gadget cases can occur.
    pub fn random_planted<R: Rng + ?Sized>(n: usize, extra_sets: usize, rng: &mut R) -> Result<(Self, Vec<i8>)> {
        if n < 4 {
            return Err(DdmError::invalid("planted instances need n >= 4"));
        }
        for _ in 0..1000 {
            let mut units: Vec<usize> = (0..n).collect();
            units.shuffle(rng);
            let mut y = vec![-1i8; n];
            for &i in &units[..n / 2] {
                y[i] = 1;
            }
            if let Some(sets) = plant_sets(&y, extra_sets, rng) {
                let inst = SetSplittingInstance::new(n, sets)?;
                debug_assert_eq!(inst.unsplit_count(&y).ok(), Some(0));
                return Ok((inst, y));
            }
        }
        Err(DdmError::Numerical("could not plant a covering instance".into()))
    }
}

fn plant_sets<R: Rng + ?Sized>(y: &[i8], extra_sets: usize, rng: &mut R) -> Option<Vec<[usize; SET_SIZE]>> {
    let n = y.len();
    let mut load = vec![0usize; n];
    let mut sets = Vec::new();
    let pick = |sign: i8, must: Option<usize>, load: &[usize], rng: &mut R| -> Option<[usize; 2]> {
        let mut pool: Vec<usize> = (0..n)
            .filter(|&i| y[i] == sign && load[i] < MAX_MULTIPLICITY && Some(i) != must)
            .collect();
        pool.shuffle(rng);
        // uncovered elements first
        pool.sort_by_key(|&i| load[i] > 0);
        match must {
            Some(e) => pool.first().map(|&o| [e, o]),
            None if pool.len() >= 2 => Some([pool[0], pool[1]]),
            None => None,
        }
    };
    while let Some(e) = (0..n).find(|&i| load[i] == 0) {
        let same = pick(y[e], Some(e), &load, rng)?;
        let other = pick(-y[e], None, &load, rng)?;
        let set = [same[0], same[1], other[0], other[1]];
        for &i in &set {
            load[i] += 1;
        }
        sets.push(set);
    }
    for _ in 0..extra_sets {
        let (Some(a), Some(b)) = (pick(1, None, &load, rng), pick(-1, None, &load, rng)) else {
            break;
        };
        let set = [a[0], a[1], b[0], b[1]];
        for &i in &set {
            load[i] += 1;
        }
        sets.push(set);
    }
    sets.shuffle(rng);
    Some(sets)
}

fn parse_numbers(line: &str, row: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .enumerate()
        .map(|(c, tok)| {
            tok.parse::<usize>().map_err(|e| DdmError::Parse {
                row,
                col: c + 1,
                msg: format!("'{tok}': {e}"),
            })
        })
        .collect()
}

fn check_signs(y: &[i8], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(DdmError::invalid(format!("sign vector has length {} but n = {n}", y.len())));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(DdmError::invalid("sign vector entries must be ±1"));
    }
    Ok(())
}

/// Auxiliary rows and columns added for an element in one or two sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxBlock {
    pub element: usize,
    /// `B_i`, the new rows.
    pub rows: Vec<usize>,
    /// The columns holding `u_{i,1}, u_{i,2}, ..`.
    pub cols: Vec<usize>,
}

/// Equal-probability gadget. `B = pattern / √3` with a `{0, ±1}` pattern
/// of `d = m + 4 n1 + 5 n2` rows and `N = n + 2 n1 + 3 n2` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualProbGadget {
    pattern: Vec<Vec<i64>>,
    n: usize,
    m: usize,
    aux: Vec<AuxBlock>,
}

impl EqualProbGadget {
    pub fn rows(&self) -> usize {
        self.pattern.len()
    }

    pub fn cols(&self) -> usize {
        self.pattern.first().map_or(0, Vec::len)
    }

    pub fn pattern(&self) -> &[Vec<i64>] {
        &self.pattern
    }

    pub fn aux_blocks(&self) -> &[AuxBlock] {
        &self.aux
    }

    /// Squared column norms of the integer pattern; every one is 3.
    pub fn pattern_column_norms_sq(&self) -> Vec<i64> {
        (0..self.cols())
            .map(|c| self.pattern.iter().map(|r| r[c] * r[c]).sum())
            .collect()
    }

    pub fn design_matrix(&self) -> Result<DesignMatrix> {
        let scale = 3f64.sqrt().recip();
        DesignMatrix::new(DMatrix::from_fn(self.rows(), self.cols(), |r, c| self.pattern[r][c] as f64 * scale))
    }

    /// `pattern · z` in exact integers.
    pub fn image(&self, z: &[i8]) -> Vec<i64> {
        self.pattern
            .iter()
            .map(|row| row.iter().zip(z).map(|(&a, &s)| a * s as i64).sum())
            .collect()
    }
}

pub fn build_equal_gadget(inst: &SetSplittingInstance) -> Result<EqualProbGadget> {
    let n = inst.n;
    let m = inst.num_sets();
    let member = inst.memberships();
    if let Some(e) = member.iter().position(Vec::is_empty) {
        return Err(DdmError::invalid(format!(
            "element {e} is in no set; its gadget column would be zero"
        )));
    }
    let n1 = member.iter().filter(|a| a.len() == 1).count();
    let n2 = member.iter().filter(|a| a.len() == 2).count();
    let d = m + 4 * n1 + 5 * n2;
    let cols = n + 2 * n1 + 3 * n2;
    let mut pattern = vec![vec![0i64; cols]; d];
    let mut aux = Vec::new();
    let mut next_row = m;
    let mut next_col = n;
    for (i, sets) in member.iter().enumerate() {
        for &j in sets {
            pattern[j][i] = 1;
        }
        // (row offset in B_i, sign) per auxiliary column
        let layout: &[&[(usize, i64)]] = match sets.len() {
            1 => &[&[(0, 1), (2, 1), (3, 1)], &[(1, -1), (2, 1), (3, 1)]],
            2 => &[
                &[(0, 1), (1, 1), (2, 1)],
                &[(1, 1), (3, 1), (4, 1)],
                &[(2, -1), (3, 1), (4, 1)],
            ],
            _ => &[],
        };
        if layout.is_empty() {
            continue;
        }
        let size = if sets.len() == 1 { 4 } else { 5 };
        let rows: Vec<usize> = (next_row..next_row + size).collect();
        // x_i covers i1, i2 (one set) or i1 (two sets)
        for &r in &rows[..3 - sets.len()] {
            pattern[r][i] = 1;
        }
        let mut block_cols = Vec::new();
        for entries in layout {
            for &(off, sign) in *entries {
                pattern[rows[off]][next_col] = sign;
            }
            block_cols.push(next_col);
            next_col += 1;
        }
        next_row += size;
        aux.push(AuxBlock {
            element: i,
            rows,
            cols: block_cols,
        });
    }
    debug_assert_eq!((next_row, next_col), (d, cols));
    Ok(EqualProbGadget { pattern, n, m, aux })
}

/// Extends `y` to the auxiliary columns so the signed sum vanishes on
/// every auxiliary row: signs `(-y_i, y_i)` for one-set elements and
/// `(-y_i, y_i, -y_i)` for two-set elements.
pub fn sign_completion(gadget: &EqualProbGadget, y: &[i8]) -> Result<Vec<i8>> {
    check_signs(y, gadget.n)?;
    let mut out = vec![0i8; gadget.cols()];
    out[..gadget.n].copy_from_slice(y);
    for block in &gadget.aux {
        let yi = y[block.element];
        for (h, &c) in block.cols.iter().enumerate() {
            out[c] = if h % 2 == 0 { -yi } else { yi };
        }
    }
    Ok(out)
}

/// Largest `|f(j)|` over the auxiliary rows `j ≥ m`, with `f = pattern · y'`.
pub fn tail_residual(gadget: &EqualProbGadget, y_full: &[i8]) -> i64 {
    gadget.image(y_full)[gadget.m..].iter().map(|v| v.abs()).max().unwrap_or(0)
}

/// A finite distribution over sign vectors with exact probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub atoms: Vec<Vec<i8>>,
    pub probs: Vec<BigRational>,
}

impl ExactDistribution {
    pub fn total_probability(&self) -> BigRational {
        self.probs.iter().fold(BigRational::zero(), |acc, p| acc + p)
    }

    pub fn mean(&self) -> Vec<BigRational> {
        let n = self.atoms.first().map_or(0, Vec::len);
        let mut mean = vec![BigRational::zero(); n];
        for (z, p) in self.atoms.iter().zip(&self.probs) {
            for (m, &zi) in mean.iter_mut().zip(z) {
                *m += p * BigRational::from_integer(BigInt::from(zi));
            }
        }
        mean
    }

    /// `‖Σ_k p_k B(z_k - z0)(z_k - z0)ᵀBᵀ‖` in floating point, using the
    /// exact mean as `z0`.
    pub fn covariance_norm(&self, b: &DesignMatrix) -> Result<f64> {
        let z0: Vec<f64> = self.mean().iter().map(rational_to_f64).collect();
        let m = b.rows();
        let mut cov = DMatrix::zeros(m, m);
        for (z, p) in self.atoms.iter().zip(&self.probs) {
            let dz = DVector::from_fn(z.len(), |i, _| z[i] as f64 - z0[i]);
            let v = b.matrix() * dz;
            cov += &v * v.transpose() * rational_to_f64(p);
        }
        crate::linalg::operator_norm(&crate::linalg::SymmetricMatrix::new((&cov + cov.transpose()) * 0.5)?)
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `±y'` with probability `1/2` each.
pub fn equal_gadget_zero_design(
    gadget: &EqualProbGadget,
    inst: &SetSplittingInstance,
    y: &[i8],
) -> Result<ExactDistribution> {
    let unsplit = inst.unsplit_count(y)?;
    if unsplit > 0 {
        return Err(DdmError::InvalidWitness(format!("{unsplit} sets are not split")));
    }
    let full = sign_completion(gadget, y)?;
    let neg: Vec<i8> = full.iter().map(|v| -v).collect();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    Ok(ExactDistribution {
        atoms: vec![full, neg],
        probs: vec![half.clone(), half],
    })
}

/// Unequal-probability gadget `M = [A -2I -2I; 0 Π 0; 0 0 Π]` with
/// `Π = I - 11ᵀ/m`, and its center `z0`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnequalProbGadget {
    m: Vec<Vec<BigRational>>,
    z0: Vec<BigRational>,
    alpha: BigRational,
    beta: BigRational,
    n: usize,
    sets: usize,
}

impl UnequalProbGadget {
    pub fn rows(&self) -> usize {
        self.m.len()
    }

    pub fn cols(&self) -> usize {
        self.z0.len()
    }

    pub fn matrix_exact(&self) -> &[Vec<BigRational>] {
        &self.m
    }

    pub fn center_exact(&self) -> &[BigRational] {
        &self.z0
    }

    /// `1 - 2α`.
    pub fn base_level(&self) -> BigRational {
        BigRational::one() - BigRational::from_integer(2.into()) * &self.alpha
    }

    /// `2β - 1`.
    pub fn q(&self) -> BigRational {
        BigRational::from_integer(2.into()) * &self.beta - BigRational::one()
    }

    /// `(1 - p) q`; zero exactly when `β = 1/2`.
    pub fn lambda(&self) -> BigRational {
        (BigRational::one() - self.base_level()) * self.q()
    }

    pub fn probabilities_exact(&self) -> Vec<BigRational> {
        let half = BigRational::new(1.into(), 2.into());
        self.z0.iter().map(|z| (z + BigRational::one()) * &half).collect()
    }

    pub fn probabilities(&self) -> Result<ProbabilityVector> {
        ProbabilityVector::new(self.probabilities_exact().iter().map(rational_to_f64).collect())
    }

    /// `max_j ‖M(:, j)‖²`.
    pub fn max_column_norm_sq(&self) -> BigRational {
        (0..self.cols())
            .map(|c| self.m.iter().fold(BigRational::zero(), |acc, r| acc + &r[c] * &r[c]))
            .max()
            .unwrap_or_else(BigRational::zero)
    }

    /// `B = M / ‖M‖_{1,2}`.
    pub fn design_matrix(&self) -> Result<DesignMatrix> {
        let raw = DMatrix::from_fn(self.rows(), self.cols(), |r, c| rational_to_f64(&self.m[r][c]));
        crate::linalg::normalize_columns(raw)
    }

    /// `M v` in exact arithmetic.
    pub fn image(&self, v: &[BigRational]) -> Vec<BigRational> {
        self.m
            .iter()
            .map(|row| row.iter().zip(v).fold(BigRational::zero(), |acc, (a, x)| acc + a * x))
            .collect()
    }

    pub fn image_signs(&self, z: &[i8]) -> Vec<BigRational> {
        let v: Vec<BigRational> = z.iter().map(|&s| BigRational::from_integer(BigInt::from(s))).collect();
        self.image(&v)
    }

    /// `max |(M z0)_j|`, exactly.
    pub fn center_residual(&self) -> BigRational {
        self.image(&self.z0)
            .into_iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(BigRational::zero)
    }
}

fn exact(x: f64, name: &str) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| DdmError::invalid(format!("{name} = {x} is not finite")))
}

/// `α ∈ (0, 1/2)`, `β ∈ (0, 1)`; the floats are converted to rationals
/// exactly.
pub fn build_unequal_gadget(inst: &SetSplittingInstance, alpha: f64, beta: f64) -> Result<UnequalProbGadget> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(DdmError::invalid(format!("alpha = {alpha} is outside (0, 1/2)")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(DdmError::invalid(format!("beta = {beta} is outside (0, 1)")));
    }
    let m = inst.num_sets();
    if m == 0 {
        return Err(DdmError::invalid("the unequal gadget needs at least one set"));
    }
    let n = inst.n;
    let alpha_q = exact(alpha, "alpha")?;
    let beta_q = exact(beta, "beta")?;
    let int = |v: i64| BigRational::from_integer(BigInt::from(v));
    let inv_m = BigRational::new(BigInt::one(), BigInt::from(m));
    let cols = n + 2 * m;
    let mut mat = vec![vec![BigRational::zero(); cols]; 3 * m];
    for (j, row) in inst.incidence().iter().enumerate() {
        for (i, &a) in row.iter().enumerate() {
            mat[j][i] = int(a);
        }
        mat[j][n + j] = int(-2);
        mat[j][n + m + j] = int(-2);
    }
    for r in 0..m {
        for c in 0..m {
            let pi = if r == c { BigRational::one() - &inv_m } else { -inv_m.clone() };
            mat[m + r][n + c] = pi.clone();
            mat[2 * m + r][n + m + c] = pi;
        }
    }
    let mut gadget = UnequalProbGadget {
        m: mat,
        z0: Vec::new(),
        alpha: alpha_q,
        beta: beta_q,
        n,
        sets: m,
    };
    let p = gadget.base_level();
    let lambda = gadget.lambda();
    gadget.z0 = std::iter::repeat_n(p.clone(), n)
        .chain(std::iter::repeat_n(&p + &lambda, m))
        .chain(std::iter::repeat_n(&p - &lambda, m))
        .collect();
    Ok(gadget)
}

/// The five-atom design `1` w.p. `p`, `±y⁽¹⁾` and `±y⁽²⁾` w.p. `p1`, `p2`,
/// with `y⁽¹⁾ = (y, 1, -1)`, `y⁽²⁾ = (-y, 1, -1)`.
pub fn satisfiable_distribution(
    gadget: &UnequalProbGadget,
    inst: &SetSplittingInstance,
    y: &[i8],
) -> Result<ExactDistribution> {
    if inst.n != gadget.n || inst.num_sets() != gadget.sets {
        return Err(DdmError::invalid("instance does not match the gadget"));
    }
    let unsplit = inst.unsplit_count(y)?;
    if unsplit > 0 {
        return Err(DdmError::InvalidWitness(format!("{unsplit} sets are not split")));
    }
    let m = gadget.sets;
    let tail: Vec<i8> = std::iter::repeat_n(1, m).chain(std::iter::repeat_n(-1, m)).collect();
    let y1: Vec<i8> = y.iter().copied().chain(tail.iter().copied()).collect();
    let y2: Vec<i8> = y.iter().map(|v| -v).chain(tail.iter().copied()).collect();
    let neg = |v: &[i8]| v.iter().map(|x| -x).collect::<Vec<i8>>();
    let p = gadget.base_level();
    let q = gadget.q();
    let quarter = BigRational::new(1.into(), 4.into());
    let rest = BigRational::one() - &p;
    let p1 = &rest * (BigRational::one() + &q) * &quarter;
    let p2 = &rest * (BigRational::one() - &q) * &quarter;
    Ok(ExactDistribution {
        atoms: vec![vec![1; gadget.cols()], neg(&y1), neg(&y2), y1, y2],
        probs: vec![p, p2.clone(), p2, p1.clone(), p1],
    })
}
