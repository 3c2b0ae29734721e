//! Study reports: flat tables, pass/fail checks, two-column plot series, and their files.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Rows of JSON scalars under named columns. Non-finite numbers are stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column, `None` for null or non-numeric cells.
    pub fn numbers(&self, name: &str) -> Vec<Option<f64>> {
        match self.column(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_f64()).collect(),
            None => Vec::new(),
        }
    }
}

/// JSON scalar for a float; `null` when not finite.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

pub fn text(s: &str) -> Value {
    Value::String(s.to_string())
}

pub fn int(v: usize) -> Value {
    Value::from(v as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// `x`-`y` series written as a two-column CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub config_hash: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    /// Checks that are recorded but do not fail the study.
    pub monitors: Vec<Check>,
    pub warnings: Vec<String>,
    pub plots: Vec<PlotSeries>,
}

impl StudyReport {
    pub fn new(study: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            study: study.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            tables: Vec::new(),
            summary: BTreeMap::new(),
            checks: Vec::new(),
            monitors: Vec::new(),
            warnings: Vec::new(),
            plots: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), passed, detail: detail.into() });
    }

    pub fn monitor(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.monitors.push(Check { name: name.to_string(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>, path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Parse { path: path.into(), message: e.to_string() };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })
}

/// Write `<study>.json`, `<study>_<table>.csv` per table and `plot_<series>.csv` per plot
/// into `dir`. Returns the written paths in a fixed order.
pub fn persist_report(report: &StudyReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let json_path = dir.join(format!("{}.json", report.study));
    let mut json = serde_json::to_vec_pretty(report).map_err(|e| Error::Json { path: json_path.clone(), source: e })?;
    json.push(b'\n');
    write_file(&json_path, &json)?;
    written.push(json_path);
    for t in &report.tables {
        let path = dir.join(format!("{}_{}.csv", report.study, t.name));
        let bytes = csv_bytes(&t.columns, t.rows.iter().map(|r| r.iter().map(csv_cell).collect()), &path)?;
        write_file(&path, &bytes)?;
        written.push(path);
    }
    for p in &report.plots {
        let path = dir.join(format!("plot_{}.csv", p.name));
        let header = [p.x_label.clone(), p.y_label.clone()];
        let rows = p.points.iter().map(|&(x, y)| vec![csv_cell(&num(x)), csv_cell(&num(y))]);
        let bytes = csv_bytes(&header, rows, &path)?;
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<StudyReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StudyReport {
        let mut r = StudyReport::new("demo", "abc", 3);
        let mut t = Table::new("cases", &["id", "value", "label"]);
        t.push(vec![int(0), num(0.1), text("a")]);
        t.push(vec![int(1), num(f64::NAN), text("b,c")]);
        r.tables.push(t);
        r.summary.insert("max".into(), num(1e-300));
        r.check("ok", true, "");
        r.plots.push(PlotSeries { name: "demo_xy".into(), x_label: "k".into(), y_label: "diff".into(), points: vec![(8.0, 0.5)] });
        r
    }

    #[test]
    fn json_round_trip_and_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let paths = persist_report(&sample(), dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let back = read_report(&paths[0]).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.table("cases").unwrap().numbers("value"), vec![Some(0.1), None]);
        let csv = std::fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(csv, "id,value,label\n0,0.1,a\n1,,\"b,c\"\n");
        let plot = std::fs::read_to_string(&paths[2]).unwrap();
        assert_eq!(plot, "k,diff\n8.0,0.5\n");
    }

    #[test]
    fn repeated_writes_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = persist_report(&sample(), dir.path()).unwrap();
        let first: Vec<Vec<u8>> = a.iter().map(|p| std::fs::read(p).unwrap()).collect();
        persist_report(&sample(), dir.path()).unwrap();
        let second: Vec<Vec<u8>> = a.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn unwritable_directory_reports_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, b"x").unwrap();
        let err = persist_report(&sample(), &file.join("sub")).unwrap_err().to_string();
        assert!(err.contains("plain"), "{err}");
    }
}
