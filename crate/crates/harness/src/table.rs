//! Numeric result tables with a fixed column schema, stored as CSV.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        Self {
            experiment: experiment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn fail(&self, message: impl Into<String>) -> HarnessError {
        HarnessError::Table {
            table: self.experiment.clone(),
            message: message.into(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(self.fail(format!(
                "row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| self.fail(format!("no column {name:?}")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Rows whose `name` column equals `value` exactly.
    pub fn filter(&self, name: &str, value: f64) -> Result<ResultTable> {
        let i = self.column_index(name)?;
        Ok(ResultTable {
            experiment: self.experiment.clone(),
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| r[i] == value)
                .cloned()
                .collect(),
        })
    }

    /// Writes the header and rows. Values use the shortest exact decimal form.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for r in &self.rows {
            out.write_record(r.iter().map(|v| format!("{v:?}")))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(experiment: &str, r: impl Read) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let columns: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
        let mut table = ResultTable {
            experiment: experiment.to_string(),
            columns,
            rows: Vec::new(),
        };
        for rec in input.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| table.fail(format!("bad number {s:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            table.push(row)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(experiment: &str, path: &Path) -> Result<Self> {
        Self::read_csv(experiment, std::fs::File::open(path)?)
    }

    /// CSV bytes, used for determinism checks.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}
