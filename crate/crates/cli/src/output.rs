//! Result serialization: JSON summaries and flat CSV tables.

use crate::config::ExperimentConfig;
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub enum Cell {
    F(f64),
    I(u64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

/// Floats with 17 significant digits; non-finite values spelled out.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match c {
                    Cell::F(v) => out.push_str(&format_float(*v)),
                    Cell::I(v) => write!(out, "{v}").unwrap(),
                    Cell::S(s) => out.push_str(s),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(check: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Verdict { check: check.into(), pass, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.check, self.detail)
    }
}

pub struct Report {
    pub results: Value,
    pub table: Table,
    pub verdicts: Vec<Verdict>,
}

#[derive(Serialize)]
struct Summary<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    results: &'a Value,
    verdicts: &'a [Verdict],
}

pub fn summary_json(cfg: &ExperimentConfig, report: &Report) -> String {
    let s = Summary {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        results: &report.results,
        verdicts: &report.verdicts,
    };
    let mut out = serde_json::to_string_pretty(&s).expect("summary serializes");
    out.push('\n');
    out
}

/// Writes `<name>.summary.json` and `<name>.trials.csv` under `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, report: &Report) -> std::io::Result<[PathBuf; 2]> {
    std::fs::create_dir_all(dir)?;
    let summary = dir.join(format!("{}.summary.json", cfg.name));
    let trials = dir.join(format!("{}.trials.csv", cfg.name));
    std::fs::write(&summary, summary_json(cfg, report))?;
    std::fs::write(&trials, report.table.to_csv())?;
    Ok([summary, trials])
}
