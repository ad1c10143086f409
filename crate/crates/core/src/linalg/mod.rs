//! Dense matrix containers and the numerical kernels shared by the walk,
//! the multiplicative-weights loop and the evaluation code.
//!
//! Every container validates its shape and entries at construction and is
//! immutable afterwards.

mod lanczos;

pub use lanczos::{top_eigenpair, TopEigen};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DdmError, Result};

/// Symmetry tolerance, relative to `max(1, max |entry|)`.
pub const SYM_TOL: f64 = 1e-9;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-8;
/// Slack allowed on the unit column-norm bound.
pub const NORM_TOL: f64 = 1e-9;

/// An `m x n` matrix whose columns all have Euclidean norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(DdmError::invalid("design matrix must be non-empty"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(DdmError::invalid("design matrix has non-finite entries"));
        }
        for (j, col) in entries.column_iter().enumerate() {
            let norm = col.norm();
            if norm > 1.0 + NORM_TOL {
                return Err(DdmError::invalid(format!(
                    "column {j} has norm {norm} > 1; normalize first"
                )));
            }
        }
        Ok(DesignMatrix { entries })
    }

    pub fn identity(n: usize) -> Result<Self> {
        DesignMatrix::new(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// `max_j ‖B(:, j)‖`.
    pub fn max_column_norm(&self) -> f64 {
        max_column_norm(&self.entries)
    }
}

/// Marginal treatment probabilities, each strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    p: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(DdmError::invalid("probability vector is empty"));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
            return Err(DdmError::invalid(format!(
                "probability p[{i}] = {v} is outside (0, 1)"
            )));
        }
        Ok(ProbabilityVector { p })
    }

    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        ProbabilityVector::new(vec![p; n])
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// The common value when every entry is equal.
    pub fn homogeneous(&self) -> Option<f64> {
        let first = self.p[0];
        self.p.iter().all(|&v| v == first).then_some(first)
    }

    /// `z0 = 2p - 1`, the mean of any feasible assignment.
    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.p.len(), self.p.iter().map(|&v| 2.0 * v - 1.0))
    }

    /// Diagonal of the Bernoulli covariance, `4 p (1 - p)`.
    pub fn bernoulli_variances(&self) -> DVector<f64> {
        DVector::from_iterator(self.p.len(), self.p.iter().map(|&v| 4.0 * v * (1.0 - v)))
    }
}

/// A realized treatment/control split in `{-1, +1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    z: Vec<i8>,
}

impl Assignment {
    pub fn new(z: Vec<i8>) -> Result<Self> {
        if let Some(i) = z.iter().position(|&v| v != 1 && v != -1) {
            return Err(DdmError::invalid(format!("assignment entry {i} is not ±1")));
        }
        Ok(Assignment { z })
    }

    /// Rounds a walk endpoint whose entries are all `±1` up to float noise.
    pub(crate) fn from_corner(z: &[f64]) -> Self {
        Assignment {
            z: z.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.z
    }

    pub fn treated(&self) -> usize {
        self.z.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.z.len(), self.z.iter().map(|&v| v as f64))
    }

    pub fn negated(&self) -> Assignment {
        Assignment {
            z: self.z.iter().map(|&v| -v).collect(),
        }
    }
}

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    entries: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Validates symmetry within [`SYM_TOL`] and stores the symmetrized matrix.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(DdmError::invalid(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(DdmError::invalid("matrix has non-finite entries"));
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > SYM_TOL * scale {
            return Err(DdmError::invalid(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(SymmetricMatrix::symmetrized(entries))
    }

    pub(crate) fn symmetrized(entries: DMatrix<f64>) -> Self {
        let sym = (&entries + entries.transpose()) * 0.5;
        SymmetricMatrix { entries: sym }
    }

    pub fn identity(m: usize) -> Self {
        SymmetricMatrix {
            entries: DMatrix::identity(m, m),
        }
    }

    pub fn zeros(m: usize) -> Self {
        SymmetricMatrix {
            entries: DMatrix::zeros(m, m),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        SymmetricMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &SymmetricMatrix) -> f64 {
        self.entries.dot(&other.entries)
    }

    pub fn eigenvalues(&self) -> Result<DVector<f64>> {
        Ok(sym_eigen(&self.entries)?.eigenvalues)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.min())
    }

    pub fn is_psd(&self) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -PSD_TOL)
    }
}

/// Covariate-augmentation input: trade-off parameter `phi` and the `n x d`
/// covariate matrix whose rows have been normalized to norm at most one.
#[derive(Debug, Clone)]
pub struct AugmentedSpec {
    phi: f64,
    covariates: DMatrix<f64>,
}

impl AugmentedSpec {
    pub fn new(phi: f64, covariates: DMatrix<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&phi) {
            return Err(DdmError::invalid(format!("phi = {phi} is outside [0, 1]")));
        }
        if covariates.nrows() == 0 || covariates.ncols() == 0 {
            return Err(DdmError::invalid("covariate matrix must be non-empty"));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(DdmError::invalid("covariates have non-finite entries"));
        }
        for (i, row) in covariates.row_iter().enumerate() {
            let norm = row.norm();
            if norm > 1.0 + NORM_TOL {
                return Err(DdmError::invalid(format!(
                    "covariate row {i} has norm {norm} > 1; normalize rows first"
                )));
            }
        }
        Ok(AugmentedSpec { phi, covariates })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }
}

pub(crate) fn sym_eigen(s: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let n = s.nrows();
    s.clone()
        .try_symmetric_eigen(f64::EPSILON, 1000 * n.max(1))
        .ok_or_else(|| {
            let scale = s.amax();
            DdmError::Numerical(format!(
                "symmetric eigendecomposition did not converge (dim {n}, max |entry| {scale:e}, \
                 Frobenius norm {:e})",
                s.norm()
            ))
        })
}

pub(crate) fn max_column_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Largest absolute eigenvalue, i.e. the spectral norm of a symmetric matrix.
pub fn operator_norm(s: &SymmetricMatrix) -> Result<f64> {
    let eig = sym_eigen(&s.entries)?;
    Ok(eig.eigenvalues.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())))
}

/// `V exp(Λ) Vᵀ` from the eigendecomposition `S = V Λ Vᵀ`.
pub fn matrix_exponential(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eigen(&s.entries)?;
    let exp_vals = eig.eigenvalues.map(f64::exp);
    if exp_vals.iter().any(|v| !v.is_finite()) {
        return Err(DdmError::Numerical(format!(
            "matrix exponential overflows (largest eigenvalue {:e})",
            eig.eigenvalues.max()
        )));
    }
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&exp_vals);
    Ok(SymmetricMatrix::symmetrized(scaled * eig.eigenvectors.transpose()))
}

/// `(1/N) Σ_k B (z_k - z0)(z_k - z0)ᵀ Bᵀ`.
pub fn empirical_covariance(
    samples: &[Assignment],
    b: &DesignMatrix,
    z0: &DVector<f64>,
) -> Result<SymmetricMatrix> {
    if samples.is_empty() {
        return Err(DdmError::invalid("empirical covariance needs at least one sample"));
    }
    let n = b.cols();
    if z0.len() != n {
        return Err(DdmError::invalid(format!(
            "center has length {} but B has {n} columns",
            z0.len()
        )));
    }
    if let Some(k) = samples.iter().position(|z| z.len() != n) {
        return Err(DdmError::invalid(format!(
            "sample {k} has length {} but B has {n} columns",
            samples[k].len()
        )));
    }
    let centered = DMatrix::from_fn(n, samples.len(), |i, k| {
        samples[k].as_slice()[i] as f64 - z0[i]
    });
    let y = b.matrix() * centered;
    let cov = &y * y.transpose() / samples.len() as f64;
    Ok(SymmetricMatrix::symmetrized(cov))
}

/// Stacks `sqrt(phi) I` over `sqrt(1 - phi) Xᵀ`, collapsing to `I` or `Xᵀ`
/// at the endpoints.
pub fn build_augmented_matrix(spec: &AugmentedSpec) -> Result<DesignMatrix> {
    let x = &spec.covariates;
    let (n, d) = (x.nrows(), x.ncols());
    let phi = spec.phi;
    if phi == 1.0 {
        return DesignMatrix::identity(n);
    }
    if phi == 0.0 {
        return DesignMatrix::new(x.transpose());
    }
    let mut b = DMatrix::zeros(n + d, n);
    let top = phi.sqrt();
    let bottom = (1.0 - phi).sqrt();
    for i in 0..n {
        b[(i, i)] = top;
    }
    b.view_mut((n, 0), (d, n)).copy_from(&(x.transpose() * bottom));
    DesignMatrix::new(b)
}

/// Divides every entry by the largest column norm.
pub fn normalize_columns(raw: DMatrix<f64>) -> Result<DesignMatrix> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(DdmError::invalid("matrix has non-finite entries"));
    }
    let scale = max_column_norm(&raw);
    if scale == 0.0 {
        return Err(DdmError::invalid("cannot normalize an all-zero matrix"));
    }
    let mut scaled = raw / scale;
    // Guard the bound against the last ulp of rounding.
    let after = max_column_norm(&scaled);
    if after > 1.0 {
        scaled /= after;
    }
    DesignMatrix::new(scaled)
}

/// Divides every covariate row by the largest row norm so `‖x_i‖ ≤ 1`.
pub fn normalize_rows(raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = raw.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(DdmError::invalid("cannot normalize covariates: zero or non-finite rows"));
    }
    let mut out = raw / scale;
    let after = out.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    if after > 1.0 {
        out /= after;
    }
    Ok(out)
}
