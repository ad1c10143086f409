//! `gen-data`: matrices and covariate/outcome tables as CSV.

use std::io::Write;
use std::path::PathBuf;

use ddm_core::data::{
    gen_covariates, gen_outcomes, gen_random_matrix, ingest_covariate_csv, IngestOptions, OutcomeKind, OutcomeModel,
    DEFAULT_INGEST_NOISE_SD,
};
use ddm_core::linalg::{build_augmented_matrix, normalize_rows};
use ddm_core::rng::stream;
use ddm_core::AugmentedSpec;
use nalgebra::DMatrix;

use crate::args::GenArgs;
use crate::config::{pick, FileConfig};
use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "ddm-data/v1";

#[derive(Debug, Clone, PartialEq)]
pub enum GenKind {
    Random { m: usize, n: usize },
    Augmented { n: usize, d: usize, phi: f64 },
    Covariates { n: usize, d: usize, model: OutcomeModel },
    Ingest { path: PathBuf, noise_sd: f64, subsample: Option<usize> },
}

impl GenKind {
    fn name(&self) -> &'static str {
        match self {
            GenKind::Random { .. } => "random",
            GenKind::Augmented { .. } => "augmented",
            GenKind::Covariates { .. } => "covariates",
            GenKind::Ingest { .. } => "ingest",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenSettings {
    pub seed: u64,
    pub kind: GenKind,
}

impl GenSettings {
    pub fn resolve(args: &GenArgs, file: &FileConfig) -> CliResult<Self> {
        let n = pick(args.n, file.n, 100);
        let d = pick(args.d, file.d, 40);
        let kind = match pick(args.kind.clone(), file.kind.clone(), "random".into()).as_str() {
            "random" => GenKind::Random {
                m: pick(args.m, file.m, 20),
                n,
            },
            "augmented" => {
                let file_phi = match &file.phi {
                    Some(g) => g.resolve()?.first().copied(),
                    None => None,
                };
                let phi = pick(args.phi, file_phi, 0.5);
                if !(0.0..=1.0).contains(&phi) {
                    return Err(CliError::invalid(format!("phi = {phi} is outside [0, 1]")));
                }
                GenKind::Augmented { n, d, phi }
            }
            "covariates" => {
                let kind: OutcomeKind = pick(args.model.clone(), file.model.clone(), "linear".into())
                    .parse()
                    .map_err(|e: ddm_core::DdmError| CliError::invalid(e.to_string()))?;
                let mut model = OutcomeModel::new(kind);
                model.noise_sd = pick(args.noise_sd, file.noise_sd, model.noise_sd);
                GenKind::Covariates { n, d, model }
            }
            "ingest" => GenKind::Ingest {
                path: args
                    .input
                    .clone()
                    .or_else(|| file.input.clone())
                    .ok_or_else(|| CliError::invalid("--kind ingest needs --input"))?,
                noise_sd: pick(args.noise_sd, file.noise_sd, DEFAULT_INGEST_NOISE_SD),
                subsample: args.subsample.or(file.subsample),
            },
            other => return Err(CliError::invalid(format!("unknown data kind '{other}'"))),
        };
        Ok(GenSettings {
            seed: pick(args.common.seed, file.seed, 1),
            kind,
        })
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: DMatrix<f64>,
}

fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|j| format!("{prefix}{j}")).collect()
}

pub fn generate(s: &GenSettings) -> CliResult<Table> {
    let mut rng = stream(s.seed, &[0]);
    Ok(match &s.kind {
        GenKind::Random { m, n } => Table {
            header: numbered("c", *n),
            rows: gen_random_matrix(*m, *n, &mut rng)?.into_matrix(),
        },
        GenKind::Augmented { n, d, phi } => {
            let x = normalize_rows(&gen_covariates(*n, *d, &mut rng)?)?;
            let b = build_augmented_matrix(&AugmentedSpec::new(*phi, x)?)?;
            Table {
                header: numbered("c", *n),
                rows: b.into_matrix(),
            }
        }
        GenKind::Covariates { n, d, model } => {
            let x = gen_covariates(*n, *d, &mut rng)?;
            let (a, b) = gen_outcomes(&x, model, &mut rng)?;
            let mut header = numbered("x", *d);
            header.extend(["a".to_string(), "b".to_string()]);
            let rows = DMatrix::from_fn(*n, d + 2, |i, j| match j {
                j if j < *d => x[(i, j)],
                j if j == *d => a[i],
                _ => b[i],
            });
            Table { header, rows }
        }
        GenKind::Ingest { path, noise_sd, subsample } => {
            let opts = IngestOptions {
                noise_sd: *noise_sd,
                subsample: *subsample,
            };
            let report = ingest_covariate_csv(path, &opts, &mut rng)?;
            if !report.full_rank() {
                eprintln!("warning: ingested matrix has rank {}", report.rank);
            }
            let cols = report.matrix.cols();
            Table {
                header: numbered("c", cols),
                rows: report.matrix.into_matrix(),
            }
        }
    })
}

pub fn write_table<W: Write>(mut out: W, s: &GenSettings, table: &Table) -> CliResult<()> {
    writeln!(out, "# schema={SCHEMA} kind={} seed={}", s.kind.name(), s.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in table.rows.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
