use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ledger::{BoundLedger, KLedger, RateFit};
use crate::error::{Error, Result};
use crate::format::g12;

/// A report with a fixed CSV layout.
pub trait Tabular {
    fn header(&self) -> &'static [&'static str];
    fn records(&self) -> Vec<Vec<f64>>;
}

impl Tabular for BoundLedger {
    fn header(&self) -> &'static [&'static str] {
        &["n", "lhs", "term1", "term2", "term3", "slack"]
    }

    fn records(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| vec![r.n as f64, r.lhs, r.term1, r.term2, r.term3, r.slack])
            .collect()
    }
}

impl Tabular for KLedger {
    fn header(&self) -> &'static [&'static str] {
        &["n", "lhs", "k_functional", "rhs", "witness_rhs", "slack"]
    }

    fn records(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.n as f64,
                    r.lhs,
                    r.k_functional,
                    r.rhs,
                    r.witness_rhs.unwrap_or(f64::NAN),
                    r.slack,
                ]
            })
            .collect()
    }
}

impl Tabular for RateFit {
    fn header(&self) -> &'static [&'static str] {
        &["n", "lhs"]
    }

    fn records(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| vec![r.n as f64, r.lhs]).collect()
    }
}

/// CSV text with every number in `%.12g` form.
pub fn csv_string(header: &[&str], records: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for rec in records {
        w.write_record(rec.iter().map(|&v| g12(v)))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_csv(path: &Path, header: &[&str], records: &[Vec<f64>]) -> Result<()> {
    write_file(path, &csv_string(header, records)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emitted {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Writes the CSV table and the JSON summary of a report.
pub fn emit_reports<T: Tabular + Serialize>(
    report: &T,
    csv: &Path,
    json: &Path,
) -> Result<Emitted> {
    write_csv(csv, report.header(), &report.records())?;
    write_json(json, report)?;
    Ok(Emitted {
        csv: csv.to_path_buf(),
        json: json.to_path_buf(),
    })
}
