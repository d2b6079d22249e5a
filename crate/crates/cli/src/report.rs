//! Run reports and their CSV emission.

use aclab::io::fmt_f64;
use std::path::{Path, PathBuf};

/// A cell of a report table.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::report::Cell::from($x)),*] };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "table {}", self.name);
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One acceptance or diagnostic check with its measured value and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl CheckRow {
    pub fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, passed: bool) -> Self {
        CheckRow {
            name: name.into(),
            value,
            threshold: threshold.into(),
            passed,
        }
    }

    /// `value <= limit`.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, format!("<= {limit:e}"), value <= limit)
    }

    /// `lo <= value <= hi`.
    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, value, format!("in [{lo}, {hi}]"), value >= lo && value <= hi)
    }

    /// `value >= limit`.
    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, format!(">= {limit}"), value >= limit)
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: value {} threshold {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            fmt_short(self.value),
            self.threshold
        )
    }
}

fn fmt_short(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.4e}")
    }
}

/// Per-epsilon solution summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSummary {
    pub epsilon: f64,
    pub lambda: f64,
    pub energy: f64,
    pub residual: f64,
    pub max_abs: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub summaries: Vec<SolutionSummary>,
    pub tables: Vec<Table>,
    pub fitted: Vec<(String, f64)>,
    pub checks: Vec<CheckRow>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(
            "summary",
            &[
                "epsilon",
                "lambda",
                "energy",
                "residual",
                "max_abs",
                "iterations",
                "converged",
                "error",
            ],
        );
        for s in &self.summaries {
            t.push(row![
                s.epsilon,
                s.lambda,
                s.energy,
                s.residual,
                s.max_abs,
                s.iterations,
                s.converged,
                s.error.clone().unwrap_or_default()
            ]);
        }
        t
    }

    pub fn fitted_table(&self) -> Table {
        let mut t = Table::new("fitted_constants", &["name", "value"]);
        for (n, v) in &self.fitted {
            t.push(row![n.as_str(), *v]);
        }
        t
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["name", "value", "threshold", "passed"]);
        for c in &self.checks {
            t.push(row![c.name.as_str(), c.value, c.threshold.as_str(), c.passed]);
        }
        t
    }

    /// Writes every diagnostic table, plus the fitted constants and checks when present.
    pub fn write_tables(&self, dir: &Path) -> Result<Vec<PathBuf>, csv::Error> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut all: Vec<Table> = self.tables.clone();
        if !self.fitted.is_empty() {
            all.push(self.fitted_table());
        }
        if !self.checks.is_empty() {
            all.push(self.checks_table());
        }
        for t in &all {
            let p = dir.join(format!("{}.csv", t.name));
            t.write_csv(&p)?;
            written.push(p);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_rows_carry_value_and_threshold() {
        let c = CheckRow::at_most("residual", 2e-10, 1e-10);
        assert!(!c.passed);
        let l = c.line();
        assert!(
            l.starts_with("FAIL residual") && l.contains("2.0000e-10") && l.contains("<= 1e-10"),
            "{l}"
        );
        assert!(CheckRow::within("ratio", 1.0, 0.98, 1.02).passed);
    }

    #[test]
    fn floats_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("t", &["x", "n"]);
        let x = 0.1 + 0.2;
        t.push(row![x, 3usize]);
        let p = dir.path().join("t.csv");
        t.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let v: f64 = text.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(v, x);
    }
}
