//! `mse-sweep`: Horvitz-Thompson MSE per design, phi and p on generated data.

use ddm_core::data::{gen_covariates, gen_outcomes, OutcomeKind, OutcomeModel};
use ddm_core::designs::{BuiltDesign, DesignKind};
use ddm_core::estimation::{mixture_mse, mse_closed_form, mse_monte_carlo, ExperimentInstance, MseEstimate};
use ddm_core::exec::try_map_indexed;
use ddm_core::linalg::{build_augmented_matrix, normalize_rows};
use ddm_core::rng::stream;
use ddm_core::stats::Z_975;
use ddm_core::{AugmentedSpec, ProbabilityVector, SymmetricMatrix};
use nalgebra::{DMatrix, DVector};

use crate::args::MseArgs;
use crate::config::{self, pick, FileConfig};
use crate::error::{CliError, CliResult};
use crate::factory::DesignSettings;
use crate::results::{Rep, ResultRow};
use crate::sweep::aggregate;

pub const DEFAULT_P_GRID: &str = "0.05:0.95:0.05";
pub const METRIC: &str = "mse";
pub const CLOSED_FORM_METRIC: &str = "mse_closed_form";
/// `min over non-MWU designs of MSE / MSE(MWU(phi))`, per p.
pub const RATIO_METRIC: &str = "best_other_ratio";

#[derive(Debug, Clone)]
pub struct MseSettings {
    pub seed: u64,
    pub design: DesignSettings,
    pub model: OutcomeModel,
    pub n: usize,
    pub d: usize,
    pub phis: Vec<f64>,
    pub reps: usize,
    pub instances: usize,
}

impl MseSettings {
    pub fn resolve(args: &MseArgs, file: &FileConfig) -> CliResult<Self> {
        let design = DesignSettings::resolve(&args.design, file, DEFAULT_P_GRID)?;
        let kind: OutcomeKind = pick(args.model.clone(), file.model.clone(), "linear".into())
            .parse()
            .map_err(|e: ddm_core::DdmError| CliError::invalid(e.to_string()))?;
        let mut model = OutcomeModel::new(kind);
        model.noise_sd = pick(args.noise_sd, file.noise_sd, model.noise_sd);
        if !(model.noise_sd >= 0.0 && model.noise_sd.is_finite()) {
            return Err(CliError::invalid(format!("noise sd {} must be non-negative", model.noise_sd)));
        }
        let phis = match (&args.design.phi, &file.phi) {
            (Some(s), _) => config::parse_grid(s)?,
            (None, Some(g)) => g.resolve()?,
            (None, None) => vec![0.5, 0.9],
        };
        if let Some(phi) = phis.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(CliError::invalid(format!("phi = {phi} is outside (0, 1)")));
        }
        let s = MseSettings {
            seed: pick(args.common.seed, file.seed, 1),
            design,
            model,
            n: pick(args.n, file.n, 100),
            d: pick(args.d, file.d, 40),
            phis,
            reps: pick(args.design.reps, file.reps, 2000),
            instances: pick(args.instances, file.instances, 1),
        };
        if s.reps < 2 || s.instances == 0 || s.n < 2 {
            return Err(CliError::invalid("need reps >= 2, instances >= 1 and n >= 2"));
        }
        if s.d < s.model.active_covariates {
            return Err(CliError::invalid(format!(
                "the outcome model uses the first {} covariates but d = {}",
                s.model.active_covariates, s.d
            )));
        }
        Ok(s)
    }

    /// `(design, phi)` pairs: one per phi for MWU and GSW.
    fn variants(&self) -> Vec<(DesignKind, Option<f64>)> {
        let mut out = Vec::new();
        for &kind in &self.design.designs {
            if kind.uses_phi() {
                out.extend(self.phis.iter().map(|&phi| (kind, Some(phi))));
            } else {
                out.push((kind, None));
            }
        }
        out
    }
}

struct Data {
    x: DMatrix<f64>,
    a: DVector<f64>,
    b: DVector<f64>,
}

fn make_data(s: &MseSettings, index: usize) -> CliResult<Data> {
    let mut rng = stream(s.seed, &[0, index as u64]);
    let raw = gen_covariates(s.n, s.d, &mut rng)?;
    let (a, b) = gen_outcomes(&raw, &s.model, &mut rng)?;
    Ok(Data {
        x: normalize_rows(&raw)?,
        a,
        b,
    })
}

struct Cell {
    estimate: MseEstimate,
    closed_form: Option<f64>,
}

fn evaluate(s: &MseSettings, data: &Data, kind: DesignKind, phi: Option<f64>, q: f64, path: &[u64]) -> CliResult<Cell> {
    let mut rng = stream(s.seed, path);
    let p = ProbabilityVector::uniform(s.n, q)?;
    let inst = ExperimentInstance::new(data.x.clone(), data.a.clone(), data.b.clone(), p.clone())?;
    let b = build_augmented_matrix(&AugmentedSpec::new(phi.unwrap_or(0.5), data.x.clone())?)?;
    let built = s.design.build(kind, &b, &data.x, &p, &mut rng)?;
    let estimate = match &built {
        BuiltDesign::Mwu(dist) => mixture_mse(dist, &inst)?,
        other => mse_monte_carlo(|r| other.sample(r), &inst, s.reps, &mut rng)?,
    };
    let closed_form = match kind {
        DesignKind::Bernoulli => {
            let cov = SymmetricMatrix::from_diagonal(p.bernoulli_variances().as_slice())?;
            Some(mse_closed_form(&cov, &inst)?)
        }
        _ => None,
    };
    Ok(Cell { estimate, closed_form })
}

pub fn run(s: &MseSettings) -> CliResult<Vec<ResultRow>> {
    let variants = s.variants();
    let grid = &s.design.p_grid;
    let data = try_map_indexed(s.instances, s.design.exec, |i| make_data(s, i))?;

    // task order: variant, p, instance
    let per_variant = grid.len() * s.instances;
    let cells = try_map_indexed(variants.len() * per_variant, s.design.exec, |k| {
        let (vi, rest) = (k / per_variant, k % per_variant);
        let (pi, inst) = (rest / s.instances, rest % s.instances);
        let (kind, phi) = variants[vi];
        let path = [1, vi as u64, pi as u64, inst as u64];
        evaluate(s, &data[inst], kind, phi, grid[pi], &path)
    })?;

    let mut rows = Vec::new();
    // aggregated MSE per (variant, p), for the ratio rows
    let mut means = vec![vec![f64::NAN; grid.len()]; variants.len()];
    for (vi, &(kind, phi)) in variants.iter().enumerate() {
        for (pi, &p) in grid.iter().enumerate() {
            let start = vi * per_variant + pi * s.instances;
            let block = &cells[start..start + s.instances];
            let row = |metric: &str, value: f64, lo: f64, hi: f64, rep: Rep| ResultRow {
                design: kind.name().to_string(),
                p,
                phi,
                metric: metric.to_string(),
                value,
                ci_lo: lo,
                ci_hi: hi,
                rep,
            };
            for (i, cell) in block.iter().enumerate() {
                let e = &cell.estimate;
                let half = Z_975 * e.std_error;
                rows.push(row(METRIC, e.mse, e.mse - half, e.mse + half, Rep::Index(i)));
                if let Some(cf) = cell.closed_form {
                    rows.push(row(CLOSED_FORM_METRIC, cf, cf, cf, Rep::Index(i)));
                }
            }
            let pairs: Vec<(f64, f64)> = block.iter().map(|c| (c.estimate.mse, c.estimate.std_error)).collect();
            let (mean, lo, hi) = aggregate(&pairs);
            means[vi][pi] = mean;
            rows.push(row(METRIC, mean, lo, hi, Rep::All));
            if block[0].closed_form.is_some() {
                let cf: Vec<(f64, f64)> = block.iter().map(|c| (c.closed_form.unwrap_or(f64::NAN), 0.0)).collect();
                let (mean, lo, hi) = aggregate(&cf);
                rows.push(row(CLOSED_FORM_METRIC, mean, lo, hi, Rep::All));
            }
        }
    }

    let others: Vec<usize> = (0..variants.len()).filter(|&v| variants[v].0 != DesignKind::Mwu).collect();
    if !others.is_empty() {
        for (vi, &(kind, phi)) in variants.iter().enumerate() {
            if kind != DesignKind::Mwu {
                continue;
            }
            for (pi, &p) in grid.iter().enumerate() {
                let best = others.iter().map(|&o| means[o][pi]).fold(f64::INFINITY, f64::min);
                let ratio = best / means[vi][pi];
                rows.push(ResultRow {
                    design: kind.name().to_string(),
                    p,
                    phi,
                    metric: RATIO_METRIC.to_string(),
                    value: ratio,
                    ci_lo: ratio,
                    ci_hi: ratio,
                    rep: Rep::All,
                });
            }
        }
    }
    Ok(rows)
}
