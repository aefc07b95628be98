//! Tables, run records and the run directory layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// A numeric table written as CSV. Column descriptions feed the schema
/// file.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(self.file_name());
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(self.columns.iter().map(|c| c.0.as_str()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// Reads a CSV written by [`Table::write`]; cells that do not parse become
/// `NaN`.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect());
    }
    Ok((headers, rows))
}

/// Plot request attached to a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub table: String,
    pub x: String,
    pub y: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: String,
    pub annotation: Option<String>,
}

/// What an experiment produces before anything touches the disk.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub metrics: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    /// JSON documents, by file stem.
    pub documents: Vec<(String, Value)>,
    /// Grid functions in the JSON format of the core crate, by file stem.
    pub fields: Vec<(String, String)>,
    pub plots: Vec<PlotSpec>,
    /// `Some(false)` when a certificate of the experiment failed.
    pub certified: Option<bool>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn metric(&mut self, key: &str, v: impl Into<Value>) {
        self.metrics.insert(key.into(), v.into());
    }

    /// Finite floats as numbers, everything else as a string (`NaN`,
    /// `inf`), so that the JSON stays valid.
    pub fn number(&mut self, key: &str, v: f64) {
        let value = serde_json::Number::from_f64(v).map_or_else(|| Value::String(v.to_string()), Value::Number);
        self.metrics.insert(key.into(), value);
    }

    pub fn document(&mut self, stem: &str, v: &impl Serialize) -> CliResult<()> {
        self.documents.push((stem.into(), serde_json::to_value(v)?));
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub status: String,
    pub error: Option<String>,
    /// Set when the run stopped after writing some of its artifacts.
    pub partial: bool,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub metrics: BTreeMap<String, Value>,
    pub certified: Option<bool>,
    pub plots: Vec<PlotSpec>,
    pub notes: Vec<String>,
    /// Wall time lives in this file so that the record stays byte-stable.
    pub timing_file: String,
}

pub const RECORD_FILE: &str = "record.json";
pub const CONFIG_FILE: &str = "config.json";
pub const TIMING_FILE: &str = "timing.txt";
pub const SCHEMA_FILE: &str = "schema.json";

/// First 16 hex digits of the SHA-256 of the canonical config.
pub fn run_id(config: &ExperimentConfig) -> CliResult<String> {
    let digest = Sha256::digest(config.canonical_json()?.as_bytes());
    Ok(hex::encode(digest)[..16].to_string())
}

pub fn write_json(path: &Path, v: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Column contracts of every table of the run.
pub fn schema(kind: &str, tables: &[Table]) -> Value {
    let tables: BTreeMap<String, Value> = tables
        .iter()
        .map(|t| {
            let cols: Vec<Value> = t
                .columns
                .iter()
                .map(|(name, desc)| serde_json::json!({ "name": name, "description": desc }))
                .collect();
            (t.file_name(), Value::Array(cols))
        })
        .collect();
    serde_json::json!({ "experiment": kind, "tables": tables })
}
