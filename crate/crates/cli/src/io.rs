//! CSV ingestion, float formatting and content digests.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Malformed or missing input. Maps to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// A numeric table read from CSV: header names and column-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        let j = self.index_of(name)?;
        Ok(&self.columns[j])
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            input_error(format!(
                "column '{name}' not found; available columns: {}",
                self.headers.join(", ")
            ))
        })
    }
}

/// Reads a headed, all-numeric CSV from bytes. Rows are numbered from 1
/// for the first data row.
pub fn parse_numeric_csv(bytes: &[u8], source: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(input_error(format!("{source}: missing header (file is empty)"))),
        Some(r) => r.map_err(|e| input_error(format!("{source}: {e}")))?,
    };
    if header.iter().all(|f| f.parse::<f64>().is_ok()) {
        return Err(input_error(format!(
            "{source}: missing header; the first row is numeric, expected column names"
        )));
    }
    let headers: Vec<String> = header.iter().map(str::to_string).collect();
    for (j, h) in headers.iter().enumerate() {
        if h.is_empty() {
            return Err(input_error(format!("{source}: column {} has an empty name", j + 1)));
        }
        if headers[..j].contains(h) {
            return Err(input_error(format!("{source}: duplicate column name '{h}'")));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| input_error(format!("{source}: row {row}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(input_error(format!(
                "{source}: row {row} has {} fields, expected {}",
                rec.len(),
                headers.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                input_error(format!(
                    "{source}: row {row}, column '{}': '{field}' is not a number",
                    headers[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(input_error(format!(
                    "{source}: row {row}, column '{}': '{field}' is not finite",
                    headers[j]
                )));
            }
            columns[j].push(v);
        }
    }
    Ok(Table { headers, columns })
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))
}

/// First 64 bits of the SHA-256 of `bytes`, as 16 hex digits.
pub fn digest(bytes: &[u8]) -> String {
    let h = Sha256::digest(bytes);
    h[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV with LF line endings and round-trippable floats.
pub fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Like [`write_csv`] with a leading text column.
pub fn write_labelled_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = (String, Vec<f64>)>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for (label, row) in rows {
        let mut rec = vec![label];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    let mut f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| input_error(format!("{}: invalid JSON: {e}", path.display())))
}

/// Parses a comma-separated list of numbers such as `0.5,0.95`.
pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| input_error(format!("{what}: '{t}' is not a number")))
        })
        .collect()
}
