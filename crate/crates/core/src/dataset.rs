//! Columnar numeric tables keyed by variable name.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Named numeric columns of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dataset from `(name, values)` pairs.
    pub fn from_columns<I, S>(cols: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut ds = Dataset::new();
        for (name, values) in cols {
            ds.push_column(name, values)?;
        }
        Ok(ds)
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.names.iter().any(|n| *n == name) {
            return Err(Error::Data(format!("duplicate column `{name}`")));
        }
        if let Some(first) = self.columns.first() {
            if first.len() != values.len() {
                return Err(Error::Data(format!(
                    "column `{name}` has length {}, expected {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// Rejects any non-finite values in the named columns, reporting row indices.
    pub fn check_finite(&self, names: &[&str]) -> Result<()> {
        for &name in names {
            let col = self.column(name)?;
            let rows: Vec<usize> = col
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_finite())
                .map(|(i, _)| i)
                .collect();
            if !rows.is_empty() {
                return Err(Error::NonFinite {
                    column: name.to_string(),
                    rows,
                });
            }
        }
        Ok(())
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (c, field) in rec.iter().enumerate() {
                let v = field.parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "row {row}, column `{}`: cannot parse `{field}` as a number",
                        names[c]
                    ))
                })?;
                columns[c].push(v);
            }
        }
        let ds = Dataset::from_columns(names.into_iter().zip(columns))?;
        if ds.nrows() == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        Ok(ds)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        w.write_record(&self.names)?;
        for i in 0..self.nrows() {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Dataset> {
        let mut out = Dataset::new();
        for &n in names {
            out.push_column(n, self.column(n)?.to_vec())?;
        }
        Ok(out)
    }

    /// Rows `idx` of every column.
    pub fn take_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }
}
