//! CSV and JSON writers. Floats are written with the shortest decimal
//! representation that parses back to the same value.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub fn num(v: f64) -> String {
    format!("{v}")
}

fn write_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| write_err(dir, e))
}

/// Rectangular table of already-formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_write_err(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_write_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| csv_write_err(path, e))?;
        }
        w.flush().map_err(|e| write_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::Read {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            });
        }
        let table_err = |e: csv::Error| CliError::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut r = csv::Reader::from_path(path).map_err(table_err)?;
        let header = r.headers().map_err(table_err)?.iter().map(str::to_string).collect();
        let mut t = Table::new(header);
        for rec in r.records() {
            t.rows.push(rec.map_err(table_err)?.iter().map(str::to_string).collect());
        }
        Ok(t)
    }
}

fn csv_write_err(path: &Path, e: csv::Error) -> CliError {
    write_err(path, std::io::Error::other(e.to_string()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| write_err(path, e.into()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| write_err(path, e))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
