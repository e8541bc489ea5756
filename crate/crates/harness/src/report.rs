//! CSV tables and the JSON run report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const REPORT_SCHEMA: &str = include_str!("../schema/run_report.schema.json");
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Energy,
    InverseEnergy,
    Time,
    Nats,
    Bits,
    Dimensionless,
    Count,
    Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: Unit,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    I(i64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x as u64)
    }
}
impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::U(x)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}
impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        ryu::Buffer::new().format_finite(x).to_string()
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => format_f64(*x),
            Cell::U(x) => x.to_string(),
            Cell::I(x) => x.to_string(),
            Cell::B(x) => x.to_string(),
            Cell::S(s) => escape(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, Unit)]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|&(n, unit)| Column { name: n.to_string(), unit }).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| escape(&c.name)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: Value,
    pub unit: Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub rows: usize,
    pub columns: Vec<Column>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub timings: Vec<Timing>,
    pub metrics: Vec<Metric>,
    pub diagnostics: Vec<Metric>,
    pub artifacts: Vec<Artifact>,
}

/// Collects tables, metrics and timings for one command.
pub struct Recorder {
    pub command: String,
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub metrics: Vec<Metric>,
    pub diagnostics: Vec<Metric>,
    pub timings: Vec<Timing>,
}

impl Recorder {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            tables: Vec::new(),
            metrics: Vec::new(),
            diagnostics: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push(Timing { stage: stage.to_string(), seconds: t.elapsed().as_secs_f64() });
        out
    }

    pub fn record_time(&mut self, stage: &str, seconds: f64) {
        self.timings.push(Timing { stage: stage.to_string(), seconds });
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize, unit: Unit) {
        self.metrics.push(Metric { name: name.to_string(), value: to_value(value), unit });
    }

    pub fn diagnostic(&mut self, name: &str, value: impl Serialize, unit: Unit) {
        self.diagnostics.push(Metric { name: name.to_string(), value: to_value(value), unit });
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn get_table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Write every table as CSV plus `report.json` and the schema into `dir`.
    pub fn write(&self, dir: &Path) -> Result<RunReport> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut artifacts = Vec::new();
        for t in &self.tables {
            let file = format!("{}.csv", t.name);
            let path = dir.join(&file);
            fs::write(&path, t.to_csv()).map_err(|e| HarnessError::io(&path, e))?;
            artifacts.push(Artifact { file, rows: t.rows.len(), columns: t.columns.clone() });
        }
        let report = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command: self.command.clone(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            master_seed: self.config.seed,
            timings: self.timings.clone(),
            metrics: self.metrics.clone(),
            diagnostics: self.diagnostics.clone(),
            artifacts,
        };
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Report(e.to_string()))?;
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        let schema = dir.join("run_report.schema.json");
        fs::write(&schema, REPORT_SCHEMA).map_err(|e| HarnessError::io(&schema, e))?;
        Ok(report)
    }
}

/// Non-finite floats become strings so that the JSON stays valid.
fn to_value(v: impl Serialize) -> Value {
    fn fix(v: Value) -> Value {
        match v {
            Value::Array(a) => Value::Array(a.into_iter().map(fix).collect()),
            Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, fix(v))).collect()),
            other => other,
        }
    }
    match serde_json::to_value(&v) {
        Ok(x) => fix(x),
        Err(_) => Value::Null,
    }
}

/// Every artifact listed in the report must exist and hold a header plus at
/// least one row.
pub fn check_artifacts(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for a in &report.artifacts {
        let p = dir.join(&a.file);
        let text = fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
        if text.lines().count() < 2 {
            return Err(HarnessError::Report(format!("{} is empty", a.file)));
        }
        out.push(p);
    }
    Ok(out)
}
