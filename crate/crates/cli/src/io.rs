//! CSV and key-value file formats.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use noisefield::spectral::{Psd, Sides};
use noisefield::Trace;

use crate::error::{CliError, CliResult};

pub const TRACE_HEADER: [&str; 2] = ["index", "value"];

/// Reads an `index,value` trace. Rows are numbered by file line, header
/// included.
pub fn read_trace(path: &Path) -> CliResult<Trace> {
    let ingest = |row: usize, message: String| CliError::Ingest { path: path.to_path_buf(), row, message };
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
    if headers.iter().map(str::trim).ne(TRACE_HEADER) {
        return Err(ingest(1, format!("expected header `index,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
            ingest(row, e.to_string())
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = record.get(1).map(str::trim).unwrap_or("");
        if field.is_empty() {
            return Err(ingest(row, "empty value".into()));
        }
        let v: f64 = field.parse().map_err(|_| ingest(row, format!("`{field}` is not a number")))?;
        if !v.is_finite() {
            return Err(ingest(row, format!("non-finite value `{field}`")));
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(ingest(2, "trace has no data rows".into()));
    }
    Ok(Trace::new(samples, 1.0, None)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_trace(path: &Path, trace: &Trace) -> CliResult<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "index,value").map_err(io)?;
    for (i, v) in trace.samples().iter().enumerate() {
        writeln!(w, "{i},{v:?}").map_err(io)?;
    }
    finish(path, w)
}

/// Two-column `x,<column>` CSV.
pub fn write_columns(path: &Path, header: &[&str; 2], x: &[f64], y: &[f64], comments: &[String]) -> CliResult<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    for c in comments {
        writeln!(w, "# {c}").map_err(io)?;
    }
    writeln!(w, "{},{}", header[0], header[1]).map_err(io)?;
    for (a, b) in x.iter().zip(y) {
        writeln!(w, "{a:?},{b:?}").map_err(io)?;
    }
    finish(path, w)
}

/// `frequency,power` with the DC delta weight and sidedness in header comments.
pub fn write_psd(path: &Path, psd: &Psd, method: &str) -> CliResult<()> {
    let sides = match psd.sides {
        Sides::One => "one",
        Sides::Two => "two",
    };
    let comments = [
        format!("method = {method}"),
        format!("sides = {sides}"),
        format!("dc_impulse_mass = {:?}", psd.dc_impulse_mass),
    ];
    write_columns(path, &["frequency", "power"], &psd.frequencies, &psd.values, &comments)
}

/// Ordered `key = value` document.
#[derive(Debug, Default)]
pub struct KeyValues {
    lines: Vec<String>,
}

impl KeyValues {
    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.lines.push(format!("# {text}"));
        self
    }

    pub fn float(&mut self, key: &str, v: f64) -> &mut Self {
        self.lines.push(format!("{key} = {v:?}"));
        self
    }

    pub fn int(&mut self, key: &str, v: impl Display) -> &mut Self {
        self.lines.push(format!("{key} = {v}"));
        self
    }

    pub fn text(&mut self, key: &str, v: &str) -> &mut Self {
        self.lines.push(format!("{key} = {v:?}"));
        self
    }

    pub fn raw(&mut self, block: &str) -> &mut Self {
        self.lines.extend(block.lines().map(str::to_string));
        self
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }
}
