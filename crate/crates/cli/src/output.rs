//! Human tables on stdout and machine files selected by extension.

use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// A command's result: aligned text for people, a table and a JSON value for
/// machines.
pub struct Report {
    pub title: String,
    pub lines: Vec<(String, String)>,
    pub notes: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub json: serde_json::Value,
}

impl Report {
    pub fn new(title: impl Into<String>, json: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            title: title.into(),
            lines: Vec::new(),
            notes: Vec::new(),
            header: Vec::new(),
            rows: Vec::new(),
            json: serde_json::to_value(json).map_err(|e| CliError::Io(e.to_string()))?,
        })
    }

    pub fn line(&mut self, label: impl Into<String>, value: impl Into<String>) {
        self.lines.push((label.into(), value.into()));
    }

    pub fn render(&self) -> String {
        let width = self
            .lines
            .iter()
            .map(|(l, _)| l.chars().count())
            .max()
            .unwrap_or(0);
        let mut s = format!("{}\n", self.title);
        for (l, v) in &self.lines {
            s.push_str(&format!("  {l:<width$}  {v}\n"));
        }
        for n in &self.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
        s
    }

    /// Write `.json` or `.csv` depending on the extension.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let mut text = serde_json::to_string_pretty(&self.json)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                text.push('\n');
                std::fs::write(path, text).map_err(|e| io_err(path, e))
            }
            Some("csv") => {
                let mut w = csv::Writer::from_path(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
                w.write_record(&self.header).map_err(csv_err)?;
                for r in &self.rows {
                    w.write_record(r).map_err(csv_err)?;
                }
                w.flush().map_err(|e| io_err(path, e))
            }
            _ => Err(CliError::Usage(format!(
                "cannot infer output format of {} (use .json or .csv)",
                path.display()
            ))),
        }
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Full-precision number for machine tables.
pub fn num(x: f64) -> String {
    format!("{x}")
}
