//! CSV and JSON helpers shared by the subcommands.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use anchor_uq::data::Matrix;

/// Numeric CSV with a header row. All cells must parse as f64.
pub struct NumericCsv {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_numeric_csv(path: &Path) -> Result<NumericCsv> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("missing header row")?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Header is line 1; data starts at line 2.
        let line = i + 2;
        let record = record.with_context(|| format!("{}: parse error at line {line}", path.display()))?;
        if record.len() != headers.len() {
            bail!(
                "{}: line {line} has {} fields, expected {}",
                path.display(),
                record.len(),
                headers.len()
            );
        }
        let row: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().with_context(|| {
                    format!(
                        "{}: line {line}, column '{}': '{cell}' is not a number",
                        path.display(),
                        headers[j]
                    )
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(NumericCsv { headers, rows })
}

/// Splits a numeric CSV into inputs and the trailing `n_targets` columns.
pub fn split_dataset(csv: &NumericCsv, n_targets: usize) -> Result<(Matrix, Matrix)> {
    let width = csv.headers.len();
    if n_targets == 0 || n_targets >= width {
        bail!("--targets must be in 1..{width} for a {width}-column file");
    }
    let d = width - n_targets;
    let xs: Vec<Vec<f64>> = csv.rows.iter().map(|r| r[..d].to_vec()).collect();
    let ys: Vec<Vec<f64>> = csv.rows.iter().map(|r| r[d..].to_vec()).collect();
    Ok((Matrix::from_rows(&xs)?, Matrix::from_rows(&ys)?))
}

pub fn write_csv(path: &Path, headers: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(headers)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    // Shortest round-trip representation keeps files diffable and exact.
    format!("{v}")
}

/// Parses a comma-separated list of f64.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("'{t}' is not a number"))
        })
        .collect()
}

/// Parses a comma-separated list of u64.
pub fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .with_context(|| format!("'{t}' is not an integer"))
        })
        .collect()
}

/// Parses a comma-separated list of usize (layer widths).
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("'{t}' is not an integer"))
        })
        .collect()
}
