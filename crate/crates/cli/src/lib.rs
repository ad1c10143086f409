//! Experiment harness over `ddm-core`: probability sweeps of the design
//! objective and of the estimator MSE, data generation, the hardness
//! gadget report and SVG plots.

pub mod args;
pub mod config;
pub mod error;
pub mod factory;
pub mod gen_data;
pub mod hardness_demo;
pub mod mse;
pub mod plot;
pub mod results;
pub mod sweep;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult, EXIT_INVALID, EXIT_OK};

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::DdmSweep(a) => {
            let file = config::load(a.common.config.as_deref())?;
            let s = sweep::SweepSettings::resolve(a, &file)?;
            let rows = sweep::run(&s)?;
            let out = a.common.out.clone().or(file.out);
            results::emit(out.as_deref(), |w| results::write_results(w, "ddm-sweep", s.seed, &rows))
        }
        Command::MseSweep(a) => {
            let file = config::load(a.common.config.as_deref())?;
            let s = mse::MseSettings::resolve(a, &file)?;
            let rows = mse::run(&s)?;
            let out = a.common.out.clone().or(file.out);
            results::emit(out.as_deref(), |w| results::write_results(w, "mse-sweep", s.seed, &rows))
        }
        Command::GenData(a) => {
            let file = config::load(a.common.config.as_deref())?;
            let s = gen_data::GenSettings::resolve(a, &file)?;
            let table = gen_data::generate(&s)?;
            let out = a.common.out.clone().or(file.out);
            results::emit(out.as_deref(), |w| gen_data::write_table(w, &s, &table))
        }
        Command::HardnessDemo(a) => {
            let file = config::load(a.common.config.as_deref())?;
            let s = hardness_demo::HardnessSettings::resolve(a, &file)?;
            let text = hardness_demo::report(&s)?;
            let out = a.common.out.clone().or(file.out);
            results::emit(out.as_deref(), |w| Ok(w.write_all(text.as_bytes())?))
        }
        Command::Plot(a) => {
            let file = config::load(a.common.config.as_deref())?;
            let input = a
                .input
                .clone()
                .or(file.input)
                .ok_or_else(|| CliError::invalid("plot needs --input"))?;
            let f = std::fs::File::open(&input)
                .map_err(|e| CliError::io(format!("cannot open {}: {e}", input.display())))?;
            let rows = results::read_results(std::io::BufReader::new(f))?;
            let metric = a
                .metric
                .clone()
                .or(file.metric)
                .or_else(|| rows.first().map(|r| r.metric.clone()))
                .unwrap_or_else(|| sweep::METRIC.to_string());
            let series = plot::collect_series(&rows, &metric);
            let svg = plot::render_svg(&series, &metric);
            let out = a.common.out.clone().or(file.out);
            results::emit(out.as_deref(), |w| Ok(w.write_all(svg.as_bytes())?))
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code, reporting errors on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
