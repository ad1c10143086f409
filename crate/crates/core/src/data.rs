//! Synthetic matrices, covariates and outcomes, and covariate CSV ingest.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DdmError, Result};
use crate::estimation::ExperimentInstance;
use crate::linalg::{normalize_columns, normalize_rows, DesignMatrix, ProbabilityVector};

pub const DEFAULT_NOISE_SD: f64 = 0.1;
pub const DEFAULT_ACTIVE_COVARIATES: usize = 20;
pub const DEFAULT_INGEST_NOISE_SD: f64 = 0.02;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-8;

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // column-major fill order, so the stream maps to entries deterministically
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// `m x n` matrix with i.i.d. uniform `[-1, 1]` entries, column-normalized.
pub fn gen_random_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<DesignMatrix> {
    if m == 0 || n == 0 {
        return Err(DdmError::invalid("matrix dimensions must be positive"));
    }
    normalize_columns(uniform_matrix(m, n, rng))
}

/// `n x d` covariates with i.i.d. uniform `[-1, 1]` entries (not normalized).
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(DdmError::invalid("covariate dimensions must be positive"));
    }
    Ok(uniform_matrix(n, d, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Linear,
    Quadratic,
    LinearQuadratic,
    LinearQuadraticCubic,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 4] = [
        OutcomeKind::Linear,
        OutcomeKind::Quadratic,
        OutcomeKind::LinearQuadratic,
        OutcomeKind::LinearQuadraticCubic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::Linear => "linear",
            OutcomeKind::Quadratic => "quadratic",
            OutcomeKind::LinearQuadratic => "lin-quad",
            OutcomeKind::LinearQuadraticCubic => "lin-quad-cubic",
        }
    }

    /// `f` as a function of the active-covariate sum `s`.
    pub fn apply(self, s: f64) -> f64 {
        match self {
            OutcomeKind::Linear => s,
            OutcomeKind::Quadratic => s * s,
            OutcomeKind::LinearQuadratic => s + 0.5 * s * s,
            OutcomeKind::LinearQuadraticCubic => s + 0.5 * s * s + 0.5 * s * s * s,
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutcomeKind {
    type Err = DdmError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        OutcomeKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| DdmError::invalid(format!("unknown outcome model '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeModel {
    pub kind: OutcomeKind,
    pub noise_sd: f64,
    pub active_covariates: usize,
}

impl OutcomeModel {
    pub fn new(kind: OutcomeKind) -> Self {
        OutcomeModel {
            kind,
            noise_sd: DEFAULT_NOISE_SD,
            active_covariates: DEFAULT_ACTIVE_COVARIATES,
        }
    }
}

/// `a = f(s)`, `b = f(s) + ε` with `s` the sum of the first active
/// covariates and `ε ~ N(0, noise_sd²)`.
pub fn gen_outcomes<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    model: &OutcomeModel,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.ncols() < model.active_covariates {
        return Err(DdmError::invalid(format!(
            "{} covariates but the model uses the first {}",
            x.ncols(),
            model.active_covariates
        )));
    }
    let noise = Normal::new(0.0, model.noise_sd)
        .map_err(|e| DdmError::invalid(format!("noise sd {}: {e}", model.noise_sd)))?;
    let n = x.nrows();
    let a = DVector::from_fn(n, |i, _| {
        let s: f64 = x.row(i).iter().take(model.active_covariates).sum();
        model.kind.apply(s)
    });
    let b = DVector::from_fn(n, |i, _| a[i] + noise.sample(rng));
    Ok((a, b))
}

/// Covariates, outcomes and an instance with row-normalized covariates.
pub fn gen_instance<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    model: &OutcomeModel,
    p: &ProbabilityVector,
    rng: &mut R,
) -> Result<ExperimentInstance> {
    if p.len() != n {
        return Err(DdmError::invalid(format!("p has length {} but n = {n}", p.len())));
    }
    let raw = gen_covariates(n, d, rng)?;
    let (a, b) = gen_outcomes(&raw, model, rng)?;
    ExperimentInstance::new(normalize_rows(&raw)?, a, b, p.clone())
}

/// Result of [`ingest_covariates`].
#[derive(Debug, Clone)]
pub struct IngestReport {
    /// `d x n`: one column per unit.
    pub matrix: DesignMatrix,
    pub had_header: bool,
    pub rank: usize,
}

impl IngestReport {
    pub fn full_rank(&self) -> bool {
        self.rank == self.matrix.rows().min(self.matrix.cols())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub noise_sd: f64,
    /// Keep a uniform random subset of this many units.
    pub subsample: Option<usize>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            noise_sd: DEFAULT_INGEST_NOISE_SD,
            subsample: None,
        }
    }
}

/// Parses a rectangular numeric CSV (units as rows). A first line with any
/// non-numeric cell is taken as a header; `#` lines are skipped.
pub fn read_numeric_csv<Rd: Read>(reader: Rd) -> Result<(DMatrix<f64>, bool)> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut had_header = false;
    for (r, record) in csv.records().enumerate() {
        let record = record?;
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if r == 0 && parsed.iter().any(|v| v.is_err()) {
            had_header = true;
            continue;
        }
        let line = record.position().map_or(r + 1, |pos| pos.line() as usize);
        let mut row = Vec::with_capacity(parsed.len());
        for (c, (v, raw)) in parsed.into_iter().zip(record.iter()).enumerate() {
            match v {
                Ok(x) if x.is_finite() => row.push(x),
                _ => {
                    return Err(DdmError::Parse {
                        row: line,
                        col: c + 1,
                        msg: format!("'{raw}' is not a finite number"),
                    })
                }
            }
        }
        rows.push(row);
    }
    let Some(width) = rows.first().map(Vec::len) else {
        return Err(DdmError::invalid("CSV has no data rows"));
    };
    let entries: Vec<f64> = rows.into_iter().flatten().collect();
    let n = entries.len() / width;
    Ok((DMatrix::from_row_slice(n, width, &entries), had_header))
}

/// Centers each column and scales it to unit sample standard deviation.
pub fn standardize_columns(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(DdmError::invalid("standardization needs at least two rows"));
    }
    let mut out = x.clone();
    for (c, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
        if sd == 0.0 {
            return Err(DdmError::ConstantColumn { col: c });
        }
        col /= sd;
    }
    Ok(out)
}

/// Numerical rank with singular values cut at [`RANK_TOL`] times the largest.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Standardize, add `N(0, noise_sd²)` noise, transpose to `d x n`, and
/// scale to `‖B‖_{1,2} = 1`.
pub fn ingest_covariates<Rd: Read, R: Rng + ?Sized>(
    reader: Rd,
    opts: &IngestOptions,
    rng: &mut R,
) -> Result<IngestReport> {
    let (mut x, had_header) = read_numeric_csv(reader)?;
    if let Some(k) = opts.subsample {
        if k == 0 || k > x.nrows() {
            return Err(DdmError::invalid(format!("cannot subsample {k} of {} units", x.nrows())));
        }
        let mut keep = index::sample(rng, x.nrows(), k).into_vec();
        keep.sort_unstable();
        x = x.select_rows(&keep);
    }
    let mut z = standardize_columns(&x)?;
    if opts.noise_sd > 0.0 {
        let noise = Normal::new(0.0, opts.noise_sd)
            .map_err(|e| DdmError::invalid(format!("noise sd {}: {e}", opts.noise_sd)))?;
        z.apply(|v| *v += noise.sample(rng));
    }
    let matrix = normalize_columns(z.transpose())?;
    let rank = numerical_rank(matrix.matrix());
    Ok(IngestReport {
        matrix,
        had_header,
        rank,
    })
}

pub fn ingest_covariate_csv<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    opts: &IngestOptions,
    rng: &mut R,
) -> Result<IngestReport> {
    let file = std::fs::File::open(path)?;
    ingest_covariates(std::io::BufReader::new(file), opts, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn random_matrix_shape_and_norms() {
        let b = gen_random_matrix(20, 100, &mut seeded(1)).unwrap();
        assert_eq!((b.rows(), b.cols()), (20, 100));
        assert_close!(b.max_column_norm(), 1.0, 1e-12);
        let again = gen_random_matrix(20, 100, &mut seeded(1)).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn uniform_entries_have_zero_mean() {
        let x = gen_covariates(1000, 1000, &mut seeded(2)).unwrap();
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        // Var(U[-1, 1]) = 1/3
        let se = (1.0 / 3.0 / 1e6f64).sqrt();
        assert!(x.mean().abs() < 3.0 * se);
        let second = x.iter().map(|v| v * v).sum::<f64>() / 1e6;
        assert!((second - 1.0 / 3.0).abs() < 3.0 * (4.0 / 45.0 / 1e6f64).sqrt());
    }

    #[test]
    fn outcome_functions() {
        assert_eq!(OutcomeKind::LinearQuadratic.apply(2.0), 4.0);
        assert_eq!(OutcomeKind::LinearQuadraticCubic.apply(2.0), 8.0);
        assert_eq!(OutcomeKind::Quadratic.apply(-3.0), 9.0);
        for k in OutcomeKind::ALL {
            assert_eq!(k.name().parse::<OutcomeKind>().unwrap(), k);
        }
    }

    #[test]
    fn zero_covariates_leave_only_noise() {
        let x = DMatrix::zeros(5, 20);
        let (a, b) = gen_outcomes(&x, &OutcomeModel::new(OutcomeKind::Linear), &mut seeded(3)).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
        assert!(b.iter().any(|&v| v != 0.0));
        assert!(gen_outcomes(&DMatrix::zeros(5, 3), &OutcomeModel::new(OutcomeKind::Linear), &mut seeded(3)).is_err());
    }

    #[test]
    fn generated_ate_is_minus_mean_noise() {
        let p = ProbabilityVector::uniform(2000, 0.5).unwrap();
        let inst = gen_instance(2000, 40, &OutcomeModel::new(OutcomeKind::Quadratic), &p, &mut seeded(4)).unwrap();
        let tau = crate::estimation::ate(&inst);
        assert!(tau.abs() < 3.0 * 0.1 / (2000f64).sqrt());
        assert!(inst.covariates().row_iter().all(|r| r.norm() <= 1.0));
    }

    #[test]
    fn csv_header_detection_and_errors() {
        let (x, header) = read_numeric_csv("age,educ\n20,12\n30,16\n".as_bytes()).unwrap();
        assert!(header);
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[20.0, 12.0, 30.0, 16.0]));
        let (_, header) = read_numeric_csv("1,2\n3,4\n".as_bytes()).unwrap();
        assert!(!header);
        assert!(matches!(
            read_numeric_csv("a,b\n1,2\n3,x\n".as_bytes()),
            Err(DdmError::Parse { row: 3, col: 2, .. })
        ));
        assert!(read_numeric_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(matches!(
            read_numeric_csv("# note\n1,2\nnan?,4\n".as_bytes()),
            Err(DdmError::Parse { row: 3, col: 1, .. })
        ));
    }

    #[test]
    fn standardization() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let z = standardize_columns(&x).unwrap();
        assert_close!(z[(0, 0)], 1.0 / 2f64.sqrt(), 1e-15);
        let mut rng = seeded(5);
        let x = DMatrix::from_fn(50, 4, |_, j| rng.random_range(0.0..10.0) * (j + 1) as f64);
        let z = standardize_columns(&x).unwrap();
        for col in z.column_iter() {
            assert!(col.mean().abs() < 1e-10);
            assert_close!((col.norm_squared() / 49.0).sqrt(), 1.0, 1e-12);
        }
        let constant = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(matches!(standardize_columns(&constant), Err(DdmError::ConstantColumn { col: 1 })));
    }

    #[test]
    fn ingest_pipeline() {
        let mut rng = seeded(6);
        let mut text = String::from("u,v,w\n");
        for _ in 0..30 {
            let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..5.0));
            text.push_str(&format!("{a},{b},{}\n", (a > 0.5) as u8));
        }
        let rep = ingest_covariates(text.as_bytes(), &IngestOptions::default(), &mut seeded(7)).unwrap();
        assert!(rep.had_header);
        assert_eq!((rep.matrix.rows(), rep.matrix.cols()), (3, 30));
        assert_close!(rep.matrix.max_column_norm(), 1.0, 1e-12);
        assert!(rep.full_rank());
        let again = ingest_covariates(text.as_bytes(), &IngestOptions::default(), &mut seeded(7)).unwrap();
        assert_eq!(rep.matrix, again.matrix);
        let sub = IngestOptions {
            subsample: Some(10),
            ..IngestOptions::default()
        };
        let rep = ingest_covariates(text.as_bytes(), &sub, &mut seeded(7)).unwrap();
        assert_eq!(rep.matrix.cols(), 10);
    }
}
