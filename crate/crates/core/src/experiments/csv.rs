//! Numeric CSV tables with a `#`-prefixed metadata block.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Written as `# key = value` lines before the header.
    pub meta: Vec<(String, String)>,
}

/// Integers print as integers; other finite values with 17 significant
/// digits, which round-trips every `f64`.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.16e}")
    }
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        Error::check_len("csv row", self.header.len(), row.len())?;
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format_value(*x)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Vec::new();
        let mut lines = text.lines();
        let header = loop {
            let line = lines.next().ok_or_else(|| Error::invalid("csv has no header"))?;
            match line.strip_prefix('#') {
                Some(m) => {
                    let (k, v) = m.split_once('=').unwrap_or((m, ""));
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                None => break line.split(',').map(str::to_string).collect::<Vec<_>>(),
            }
        };
        let mut table = CsvTable {
            header,
            rows: Vec::new(),
            meta,
        };
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid(format!("csv row {}: {e}", i + 1)))?;
            table.push_row(row)?;
        }
        Ok(table)
    }
}
