//! Validated, deterministic output files.
//!
//! JSON documents are parsed back and compared with the value before they
//! are written; CSV rows must match the header arity and carry only finite
//! numbers. Floats use the shortest round-trip representation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub struct OutputDir {
    root: PathBuf,
}

fn output_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Output {
        path: path.display().to_string(),
        message: message.into(),
    }
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T>(&self, name: &str, value: &T) -> Result<PathBuf, CliError>
    where
        T: Serialize + DeserializeOwned + PartialEq,
    {
        let path = self.path(name);
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| output_error(&path, e.to_string()))?;
        let parsed: T = serde_json::from_str(&text)
            .map_err(|e| output_error(&path, format!("does not parse back: {e}")))?;
        if parsed != *value {
            return Err(output_error(&path, "does not round-trip"));
        }
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, table: &CsvTable) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        table.validate().map_err(|m| output_error(&path, m))?;
        let mut writer =
            csv::Writer::from_path(&path).map_err(|e| output_error(&path, e.to_string()))?;
        let mut write = || -> csv::Result<()> {
            writer.write_record(&table.header)?;
            for row in &table.rows {
                writer.write_record(row.iter().map(Cell::render))?;
            }
            writer.flush()?;
            Ok(())
        };
        write().map_err(|e| output_error(&path, e.to_string()))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, text)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(u64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => format!("{x}"),
            Cell::Int(n) => n.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    fn validate(&self) -> Result<(), String> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(format!(
                    "row {i} has {} fields, header has {}",
                    row.len(),
                    self.header.len()
                ));
            }
            for (cell, name) in row.iter().zip(&self.header) {
                if let Cell::Num(x) = cell {
                    if !x.is_finite() {
                        return Err(format!("row {i} column {name} is {x}"));
                    }
                }
            }
        }
        Ok(())
    }
}
