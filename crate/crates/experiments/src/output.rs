use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::Result;

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of a column parsed as `f64`.
    pub fn values(&self, name: &str) -> Vec<f64> {
        let Some(c) = self.column(name) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| r[c].parse().ok()).collect()
    }

    pub fn write_csv<W: Write>(&self, hash: &str, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# config_hash={hash}")?;
        writeln!(out, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(out, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self, hash: &str) -> String {
        let mut buf = Vec::new();
        self.write_csv(hash, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }
}

/// Formats a row from displayable cells.
#[macro_export]
macro_rules! row {
    ($($cell:expr),* $(,)?) => {
        vec![$($crate::output::cell(&$cell)),*]
    };
}

pub fn cell<T: Display + ?Sized>(v: &T) -> String {
    v.to_string()
}

/// One pass/fail threshold of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything a runner produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub checks: Vec<Check>,
    /// Experiment-specific summary values.
    pub summary: Value,
    pub plot: String,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Writes `table.csv`, `report.json` and `plot.gp` under
/// `<root>/<experiment>/<hash>/` and returns that directory.
pub fn write_outputs(root: &Path, config: &ExperimentConfig, outcome: &Outcome, runtime_seconds: f64) -> Result<PathBuf> {
    let hash = config.hash();
    let dir = root.join(config.experiment.as_str()).join(&hash);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("table.csv"), outcome.table.to_csv(&hash))?;
    let report = serde_json::json!({
        "experiment": config.experiment.as_str(),
        "config_hash": hash,
        "config": config,
        "passed": outcome.passed(),
        "checks": outcome.checks,
        "summary": outcome.summary,
        "runtime_seconds": runtime_seconds,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    std::fs::write(dir.join("plot.gp"), &outcome.plot)?;
    Ok(dir)
}

/// Gnuplot preamble reading `table.csv` with its header as column names.
pub fn plot_preamble(title: &str, output: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set datafile commentschars '#'\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 900,600\n\
         set output '{output}'\n\
         set title '{title}'\n"
    )
}
