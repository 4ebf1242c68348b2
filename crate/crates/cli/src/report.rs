//! Tables, CSV emission and the run report shared by every command.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// One rectangular result table.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        Ok(String::from_utf8(writer.into_inner()?)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).with_context(|| format!("writing {}", path.display()))
    }

    /// Space-aligned text rendering; numeric-looking cells are right-aligned.
    pub fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain(std::iter::once(self.header[c].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| {
                    if looks_numeric(cell) {
                        format!("{cell:>w$}")
                    } else {
                        format!("{cell:<w$}")
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = String::new();
        out.push_str(&line(&self.header));
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

fn looks_numeric(cell: &str) -> bool {
    !cell.is_empty() && cell.trim_start_matches(['+', '-']).parse::<f64>().is_ok()
}

/// Fixed-point with `digits` decimals.
pub fn fixed(x: f64, digits: usize) -> String {
    format!("{x:.digits$}")
}

/// Shortest representation that round-trips; never uses exponent notation.
pub fn raw(x: f64) -> String {
    format!("{x}")
}

pub fn signed_pct(x: f64) -> String {
    format!("{x:+.1}")
}

pub fn opt(x: Option<f64>, f: impl Fn(f64) -> String) -> String {
    x.map(f).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Csv,
}

/// Everything needed to reproduce and inspect a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub scenario: String,
    pub config: serde_json::Value,
    pub tables: Vec<Table>,
    /// Scalar results printed under the tables.
    pub summary: Vec<(String, String)>,
    pub warnings: Vec<String>,
    /// Broken internal invariants; any entry makes the run fail.
    pub violations: Vec<String>,
    pub duration_ms: f64,
}

impl RunReport {
    pub fn new(command: &str, scenario: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            scenario: scenario.to_string(),
            config,
            tables: Vec::new(),
            summary: Vec::new(),
            warnings: Vec::new(),
            violations: Vec::new(),
            duration_ms: 0.0,
        }
    }

    pub fn summary_table(&self) -> Option<Table> {
        if self.summary.is_empty() {
            return None;
        }
        let mut t = Table::new("summary", &["metric", "value"]);
        for (k, v) in &self.summary {
            t.push(vec![k.clone(), v.clone()]);
        }
        Some(t)
    }

    pub fn emit(&self, format: Format, out: &mut impl Write) -> Result<()> {
        let tables: Vec<Table> = self.tables.iter().cloned().chain(self.summary_table()).collect();
        let mut first = true;
        for table in &tables {
            if !first {
                writeln!(out)?;
            }
            first = false;
            match format {
                Format::Csv => write!(out, "{}", table.to_csv()?)?,
                Format::Table => {
                    writeln!(out, "{}", table.name)?;
                    write!(out, "{}", table.render())?;
                }
            }
        }
        Ok(())
    }
}
