//! Design settings shared by the sweeps and the design constructor.

use ddm_core::designs::{
    BuiltDesign, DesignKind, GswDesign, DEFAULT_ACCEPT_PROB, DEFAULT_BLOCK_SIZE, DEFAULT_PILOT_DRAWS,
};
use ddm_core::exec::ExecMode;
use ddm_core::mwu::{mwu_build, MwuConfig};
use ddm_core::oracle::OracleConfig;
use ddm_core::{DesignMatrix, ProbabilityVector};
use nalgebra::DMatrix;
use rand::Rng;

use crate::args::DesignArgs;
use crate::config::{pick, FileConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct DesignSettings {
    pub designs: Vec<DesignKind>,
    pub p_grid: Vec<f64>,
    pub mwu: MwuConfig,
    pub oracle: OracleConfig,
    pub block_size: usize,
    pub accept_prob: f64,
    pub pilot_draws: usize,
    pub exec: ExecMode,
}

impl DesignSettings {
    pub fn resolve(args: &DesignArgs, file: &FileConfig, default_grid: &str) -> CliResult<Self> {
        let designs = match (&args.designs, &file.designs) {
            (Some(s), _) => crate::config::split_list(s),
            (None, Some(v)) => v.resolve(),
            (None, None) => DesignKind::ALL.iter().map(|k| k.name().to_string()).collect(),
        };
        let designs = designs
            .iter()
            .map(|s| s.parse::<DesignKind>().map_err(|e| CliError::invalid(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        if designs.is_empty() {
            return Err(CliError::invalid("no designs selected"));
        }
        let p_grid = match (&args.p_grid, &file.p_grid) {
            (Some(s), _) => crate::config::parse_grid(s)?,
            (None, Some(g)) => g.resolve()?,
            (None, None) => crate::config::parse_grid(default_grid)?,
        };
        if p_grid.is_empty() {
            return Err(CliError::invalid("empty p grid"));
        }
        if let Some(p) = p_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(CliError::invalid(format!("p = {p} in the grid is outside (0, 1)")));
        }
        let sequential = args.sequential.then_some(true).or(file.sequential).unwrap_or(false);
        let exec = if sequential { ExecMode::Sequential } else { ExecMode::Parallel };
        let base = MwuConfig::default();
        let mwu = MwuConfig {
            epsilon: pick(args.eps, file.eps, base.epsilon),
            iterations: pick(args.iters, file.iters, base.iterations),
            cov_samples: pick(args.cov_samples, file.cov_samples, base.cov_samples),
            exec,
            ..base
        };
        mwu.validate()?;
        let oracle = OracleConfig {
            epsilon: mwu.epsilon,
            krylov_budget: pick(args.krylov_budget, file.krylov_budget, OracleConfig::default().krylov_budget),
            ..OracleConfig::default()
        };
        oracle.validate()?;
        let settings = DesignSettings {
            designs,
            p_grid,
            mwu,
            oracle,
            block_size: pick(args.block_size, file.block_size, DEFAULT_BLOCK_SIZE),
            accept_prob: pick(args.accept_prob, file.accept_prob, DEFAULT_ACCEPT_PROB),
            pilot_draws: pick(args.pilot_draws, file.pilot_draws, DEFAULT_PILOT_DRAWS),
            exec,
        };
        if settings.block_size == 0 {
            return Err(CliError::invalid("block size must be positive"));
        }
        if !(settings.accept_prob > 0.0 && settings.accept_prob <= 1.0) {
            return Err(CliError::invalid(format!("accept prob {} is outside (0, 1]", settings.accept_prob)));
        }
        Ok(settings)
    }

    /// Builds `kind` for matrix `b` (MWU, GSW) or covariates `x` (blocking,
    /// rerandomization).
    pub fn build<R: Rng + ?Sized>(
        &self,
        kind: DesignKind,
        b: &DesignMatrix,
        x: &DMatrix<f64>,
        p: &ProbabilityVector,
        rng: &mut R,
    ) -> ddm_core::Result<BuiltDesign> {
        Ok(match kind {
            DesignKind::Mwu => BuiltDesign::Mwu(mwu_build(b, p, &self.mwu, &self.oracle, rng)?),
            DesignKind::Gsw => BuiltDesign::Gsw(GswDesign::new(b, p)?),
            DesignKind::Bernoulli => BuiltDesign::Bernoulli(p.clone()),
            DesignKind::Complete => BuiltDesign::complete(p)?,
            DesignKind::Block => BuiltDesign::block(x, p, self.block_size)?,
            DesignKind::Rerand => BuiltDesign::rerand(x, p, self.accept_prob, self.pilot_draws, rng)?,
        })
    }
}
