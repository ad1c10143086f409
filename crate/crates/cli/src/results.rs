//! Results CSV: a `# schema=` comment line, then a fixed header.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "ddm-results/v1";
pub const COLUMNS: [&str; 8] = ["design", "p", "phi", "metric", "value", "ci_lo", "ci_hi", "rep"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rep {
    Index(usize),
    All,
}

impl fmt::Display for Rep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rep::Index(i) => write!(f, "{i}"),
            Rep::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub design: String,
    pub p: f64,
    pub phi: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub rep: Rep,
}

impl ResultRow {
    fn fields(&self) -> [String; 8] {
        [
            self.design.clone(),
            self.p.to_string(),
            self.phi.map_or_else(|| "n/a".to_string(), |v| v.to_string()),
            self.metric.clone(),
            self.value.to_string(),
            self.ci_lo.to_string(),
            self.ci_hi.to_string(),
            self.rep.to_string(),
        ]
    }
}

/// First line of every results file.
pub fn schema_line(command: &str, seed: u64) -> String {
    format!("# schema={SCHEMA} command={command} seed={seed}")
}

pub fn write_results<W: Write>(mut out: W, command: &str, seed: u64, rows: &[ResultRow]) -> CliResult<()> {
    writeln!(out, "{}", schema_line(command, seed))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

fn mismatch(msg: impl fmt::Display) -> CliError {
    CliError::invalid(format!("results schema mismatch: {msg}"))
}

fn parse_f64(s: &str, line: u64, col: &str) -> CliResult<f64> {
    s.parse::<f64>()
        .map_err(|_| mismatch(format!("line {line}: column {col} = '{s}' is not a number")))
}

pub fn read_results<R: BufRead>(mut input: R) -> CliResult<Vec<ResultRow>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let expected = format!("# schema={SCHEMA}");
    if !(first.trim_end() == expected || first.starts_with(&format!("{expected} "))) {
        return Err(mismatch(format!("first line must start with '{expected}'")));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(mismatch(format!("header is '{}'", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(mismatch)?;
        // +1 for the schema line
        let line = record.position().map_or(0, |p| p.line() + 1);
        let rep = match &record[7] {
            "all" => Rep::All,
            s => Rep::Index(s.parse().map_err(|_| mismatch(format!("line {line}: bad rep '{s}'")))?),
        };
        rows.push(ResultRow {
            design: record[0].to_string(),
            p: parse_f64(&record[1], line, "p")?,
            phi: match &record[2] {
                "n/a" => None,
                s => Some(parse_f64(s, line, "phi")?),
            },
            metric: record[3].to_string(),
            value: parse_f64(&record[4], line, "value")?,
            ci_lo: parse_f64(&record[5], line, "ci_lo")?,
            ci_hi: parse_f64(&record[6], line, "ci_hi")?,
            rep,
        });
    }
    Ok(rows)
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", p.display())))?;
            let mut buf = std::io::BufWriter::new(file);
            write(&mut buf)?;
            buf.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}
