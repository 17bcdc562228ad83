//! Plot-data CSV files: a header row, a units row prefixed with `#`, then
//! data rows.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub units: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn plot_err(path: &Path, message: impl ToString) -> CliError {
    CliError::Plot {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

impl PlotTable {
    pub fn new(columns: &[&str], units: &[&str]) -> Self {
        assert_eq!(columns.len(), units.len());
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            units: units.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut w = csv::Writer::from_writer(file);
        let io = |e: csv::Error| plot_err(path, e);
        w.write_record(&self.columns).map_err(io)?;
        let mut units = self.units.clone();
        units[0] = format!("#{}", units[0]);
        w.write_record(&units).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| plot_err(path, e))?;
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| plot_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut records = r.records();
        let units: Vec<String> = match records.next() {
            Some(rec) => {
                let rec = rec.map_err(|e| plot_err(path, e))?;
                let mut units: Vec<String> = rec.iter().map(str::to_string).collect();
                match units[0].strip_prefix('#') {
                    Some(first) => units[0] = first.to_string(),
                    None => return Err(plot_err(path, "missing units row")),
                }
                units
            }
            None => return Err(plot_err(path, "missing units row")),
        };
        let rows = records
            .map(|rec| {
                rec.map(|r| r.iter().map(str::to_string).collect())
                    .map_err(|e| plot_err(path, e))
            })
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Self {
            columns,
            units,
            rows,
        })
    }

    /// Values of a numeric column.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Invalid(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                r[idx]
                    .parse::<f64>()
                    .map_err(|e| CliError::Invalid(format!("column {name}: {e}")))
            })
            .collect()
    }
}

/// Shortest round-trip representation of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = PlotTable::new(&["n", "risk"], &["count", "squared-l2"]);
        t.push(vec!["10".into(), fmt_f64(0.1 + 0.2)]);
        t.push(vec!["20".into(), fmt_f64(1e-300)]);
        t.write(&path).unwrap();
        let back = PlotTable::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column_f64("risk").unwrap(), vec![0.1 + 0.2, 1e-300]);
    }

    #[test]
    fn missing_units_row_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "n,risk\n1,2\n").unwrap();
        assert!(PlotTable::read(&path).is_err());
    }
}
