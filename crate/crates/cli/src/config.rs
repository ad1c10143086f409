//! Flat TOML config file and the flag > file > default merge.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Every key any command reads. Keys a command does not use are ignored,
/// so one file can drive several commands; unknown keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub p_grid: Option<GridValue>,
    pub designs: Option<ListValue>,
    pub phi: Option<GridValue>,
    pub eps: Option<f64>,
    pub iters: Option<usize>,
    pub cov_samples: Option<usize>,
    pub reps: Option<usize>,
    pub eval_samples: Option<usize>,
    pub instances: Option<usize>,
    pub source: Option<String>,
    pub input: Option<PathBuf>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub model: Option<String>,
    pub noise_sd: Option<f64>,
    pub subsample: Option<usize>,
    pub block_size: Option<usize>,
    pub accept_prob: Option<f64>,
    pub pilot_draws: Option<usize>,
    pub krylov_budget: Option<usize>,
    pub sequential: Option<bool>,
    pub kind: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub witness: Option<String>,
    pub universe: Option<usize>,
    pub extra_sets: Option<usize>,
    pub metric: Option<String>,
}

/// A number list given either as a TOML array or as grid text.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    List(Vec<f64>),
    Text(String),
}

impl GridValue {
    pub fn resolve(&self) -> CliResult<Vec<f64>> {
        match self {
            GridValue::List(v) => Ok(v.clone()),
            GridValue::Text(s) => parse_grid(s),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ListValue {
    List(Vec<String>),
    Text(String),
}

impl ListValue {
    pub fn resolve(&self) -> Vec<String> {
        match self {
            ListValue::List(v) => v.clone(),
            ListValue::Text(s) => split_list(s),
        }
    }
}

pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

/// `a,b,c` or `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| CliError::invalid(format!("'{t}' in grid '{s}' is not a number")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(CliError::invalid(format!("grid '{s}' needs step > 0 and stop >= start")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // round to 12 decimals so 0.1-style steps print cleanly
            Ok((0..=count)
                .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => split_list(s).iter().map(|t| num(t)).collect(),
        _ => Err(CliError::invalid(format!("cannot parse grid '{s}'"))),
    }
}

pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
