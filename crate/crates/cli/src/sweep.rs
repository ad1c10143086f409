//! `ddm-sweep`: ‖Cov(Bz)‖ per design, p and matrix replication.

use std::path::PathBuf;

use ddm_core::data::{gen_covariates, gen_random_matrix, ingest_covariate_csv, IngestOptions};
use ddm_core::designs::{BuiltDesign, DesignKind};
use ddm_core::exec::try_map_indexed;
use ddm_core::linalg::{build_augmented_matrix, normalize_rows};
use ddm_core::mwu::{bernoulli_objective, ddm_objective_with_error, distribution_objective, Estimate};
use ddm_core::rng::stream;
use ddm_core::stats::{Summary, Z_975};
use ddm_core::{AugmentedSpec, DesignMatrix, ProbabilityVector};
use nalgebra::DMatrix;

use crate::args::SweepArgs;
use crate::config::{self, pick, FileConfig};
use crate::error::{CliError, CliResult};
use crate::factory::DesignSettings;
use crate::results::{Rep, ResultRow};

pub const DEFAULT_P_GRID: &str = "0.5:0.975:0.025";
pub const METRIC: &str = "ddm_objective";
pub const CLOSED_FORM_METRIC: &str = "ddm_objective_closed_form";

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Random { m: usize, n: usize },
    Augmented { n: usize, d: usize, phis: Vec<f64> },
    Csv { path: PathBuf, noise_sd: f64, subsample: Option<usize> },
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub seed: u64,
    pub source: Source,
    pub design: DesignSettings,
    pub reps: usize,
    pub eval_samples: usize,
}

impl SweepSettings {
    pub fn resolve(args: &SweepArgs, file: &FileConfig) -> CliResult<Self> {
        let design = DesignSettings::resolve(&args.design, file, DEFAULT_P_GRID)?;
        let kind = pick(args.source.clone(), file.source.clone(), "random".into());
        let n = pick(args.n, file.n, 100);
        let source = match kind.as_str() {
            "random" => Source::Random {
                m: pick(args.m, file.m, 20),
                n,
            },
            "augmented" => {
                let phis = match (&args.design.phi, &file.phi) {
                    (Some(s), _) => config::parse_grid(s)?,
                    (None, Some(g)) => g.resolve()?,
                    (None, None) => vec![0.5],
                };
                if let Some(phi) = phis.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                    return Err(CliError::invalid(format!("phi = {phi} is outside [0, 1]")));
                }
                Source::Augmented {
                    n,
                    d: pick(args.d, file.d, 40),
                    phis,
                }
            }
            "csv" => Source::Csv {
                path: args
                    .input
                    .clone()
                    .or_else(|| file.input.clone())
                    .ok_or_else(|| CliError::invalid("--source csv needs --input"))?,
                noise_sd: pick(args.noise_sd, file.noise_sd, ddm_core::data::DEFAULT_INGEST_NOISE_SD),
                subsample: args.subsample.or(file.subsample),
            },
            other => return Err(CliError::invalid(format!("unknown source '{other}'"))),
        };
        let reps = pick(args.design.reps, file.reps, 5);
        let eval_samples = pick(args.eval_samples, file.eval_samples, 10_000);
        if reps == 0 {
            return Err(CliError::invalid("reps must be positive"));
        }
        if eval_samples < 2 {
            return Err(CliError::invalid("eval samples must be at least 2"));
        }
        Ok(SweepSettings {
            seed: pick(args.common.seed, file.seed, 1),
            source,
            design,
            reps,
            eval_samples,
        })
    }

    fn phis(&self) -> Vec<Option<f64>> {
        match &self.source {
            Source::Augmented { phis, .. } => phis.iter().copied().map(Some).collect(),
            _ => vec![None],
        }
    }
}

/// The matrix of one replication and the covariates blocking and
/// rerandomization balance (units as rows).
struct Instance {
    b: DesignMatrix,
    x: DMatrix<f64>,
}

fn make_instance(s: &SweepSettings, phi: Option<f64>, phi_index: usize, rep: usize) -> CliResult<Instance> {
    let mut rng = stream(s.seed, &[0, phi_index as u64, rep as u64]);
    match &s.source {
        Source::Random { m, n } => {
            let b = gen_random_matrix(*m, *n, &mut rng)?;
            let x = b.matrix().transpose();
            Ok(Instance { b, x })
        }
        Source::Augmented { n, d, .. } => {
            let x = normalize_rows(&gen_covariates(*n, *d, &mut rng)?)?;
            let b = build_augmented_matrix(&AugmentedSpec::new(phi.unwrap_or(0.5), x.clone())?)?;
            Ok(Instance { b, x })
        }
        Source::Csv { path, noise_sd, subsample } => {
            let opts = IngestOptions {
                noise_sd: *noise_sd,
                subsample: *subsample,
            };
            let report = ingest_covariate_csv(path, &opts, &mut rng)?;
            if !report.full_rank() && rep == 0 {
                eprintln!(
                    "warning: ingested matrix has rank {} < {}",
                    report.rank,
                    report.matrix.rows().min(report.matrix.cols())
                );
            }
            let x = report.matrix.matrix().transpose();
            Ok(Instance { b: report.matrix, x })
        }
    }
}

fn units(s: &SweepSettings) -> Option<usize> {
    match &s.source {
        Source::Random { n, .. } | Source::Augmented { n, .. } => Some(*n),
        Source::Csv { .. } => None,
    }
}

struct Cell {
    estimate: Estimate,
    closed_form: Option<f64>,
}

fn evaluate(s: &SweepSettings, inst: &Instance, kind: DesignKind, q: f64, path: &[u64]) -> CliResult<Cell> {
    let mut rng = stream(s.seed, path);
    let p = ProbabilityVector::uniform(inst.b.cols(), q)?;
    let z0 = p.center();
    let built = s.design.build(kind, &inst.b, &inst.x, &p, &mut rng)?;
    let estimate = match &built {
        BuiltDesign::Mwu(dist) => distribution_objective(dist, &inst.b, &z0)?,
        other => {
            let samples = (0..s.eval_samples)
                .map(|_| other.sample(&mut rng))
                .collect::<ddm_core::Result<Vec<_>>>()?;
            ddm_objective_with_error(&samples, &inst.b, &z0)?
        }
    };
    let closed_form = match kind {
        DesignKind::Bernoulli => Some(bernoulli_objective(&inst.b, &p)?),
        _ => None,
    };
    Ok(Cell { estimate, closed_form })
}

fn design_code(kind: DesignKind) -> u64 {
    DesignKind::ALL.iter().position(|k| *k == kind).expect("listed") as u64
}

/// Mean with a normal-approximation 95% interval across replications; a
/// single replication keeps its own interval.
pub fn aggregate(values: &[(f64, f64)]) -> (f64, f64, f64) {
    if let [(v, sigma)] = values {
        return (*v, v - Z_975 * sigma, v + Z_975 * sigma);
    }
    let xs: Vec<f64> = values.iter().map(|v| v.0).collect();
    let s = Summary::of(&xs);
    let (lo, hi) = s.ci95();
    (s.mean, lo, hi)
}

pub fn run(s: &SweepSettings) -> CliResult<Vec<ResultRow>> {
    if let Some(n) = units(s) {
        if n < 2 {
            return Err(CliError::invalid("need at least two units"));
        }
    }
    let phis = s.phis();
    let designs = &s.design.designs;
    let grid = &s.design.p_grid;

    let instances = try_map_indexed(phis.len() * s.reps, s.design.exec, |k| {
        let (fi, rep) = (k / s.reps, k % s.reps);
        make_instance(s, phis[fi], fi, rep)
    })?;

    // task order: phi, design, p, rep
    let per_phi = designs.len() * grid.len() * s.reps;
    let cells = try_map_indexed(phis.len() * per_phi, s.design.exec, |k| {
        let (fi, rest) = (k / per_phi, k % per_phi);
        let di = rest / (grid.len() * s.reps);
        let pi = (rest / s.reps) % grid.len();
        let rep = rest % s.reps;
        let path = [1, fi as u64, design_code(designs[di]), pi as u64, rep as u64];
        evaluate(s, &instances[fi * s.reps + rep], designs[di], grid[pi], &path)
    })?;

    let mut rows = Vec::new();
    for (fi, phi) in phis.iter().enumerate() {
        for (di, kind) in designs.iter().enumerate() {
            for (pi, &p) in grid.iter().enumerate() {
                let start = fi * per_phi + (di * grid.len() + pi) * s.reps;
                let block = &cells[start..start + s.reps];
                let row = |metric: &str, value: f64, lo: f64, hi: f64, rep: Rep| ResultRow {
                    design: kind.name().to_string(),
                    p,
                    phi: *phi,
                    metric: metric.to_string(),
                    value,
                    ci_lo: lo,
                    ci_hi: hi,
                    rep,
                };
                for (rep, cell) in block.iter().enumerate() {
                    let e = cell.estimate;
                    rows.push(row(METRIC, e.value, e.value - Z_975 * e.sigma, e.value + Z_975 * e.sigma, Rep::Index(rep)));
                    if let Some(cf) = cell.closed_form {
                        rows.push(row(CLOSED_FORM_METRIC, cf, cf, cf, Rep::Index(rep)));
                    }
                }
                let pairs: Vec<(f64, f64)> = block.iter().map(|c| (c.estimate.value, c.estimate.sigma)).collect();
                let (mean, lo, hi) = aggregate(&pairs);
                rows.push(row(METRIC, mean, lo, hi, Rep::All));
                if block[0].closed_form.is_some() {
                    let cf: Vec<(f64, f64)> = block.iter().map(|c| (c.closed_form.unwrap_or(f64::NAN), 0.0)).collect();
                    let (mean, lo, hi) = aggregate(&cf);
                    rows.push(row(CLOSED_FORM_METRIC, mean, lo, hi, Rep::All));
                }
            }
        }
    }
    Ok(rows)
}
