//! CSV ingestion: comma separated, header row required, numeric cells only.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Reads a CSV into a dataset with `outcome` as the binary outcome and every
/// other column as a named numeric column. Diagnostics carry 1-based line
/// numbers (the header is line 1) and column names.
pub fn read_dataset(path: &Path, outcome: &str) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text, outcome)
}

pub fn parse_dataset(text: &str, outcome: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidData(format!("line 1: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::InvalidData("line 1: missing header row".into()));
    }
    let y_idx = headers
        .iter()
        .position(|h| h == outcome)
        .ok_or_else(|| Error::UnknownColumn(outcome.to_string()))?;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::InvalidData(format!("line {line}: {e}")))?;
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::InvalidData(format!(
                    "line {line}, column `{}`: missing value",
                    headers[j]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::InvalidData(format!(
                    "line {line}, column `{}`: non-numeric value `{cell}`",
                    headers[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "line {line}, column `{}`: non-finite value",
                    headers[j]
                )));
            }
            if j == y_idx && v != 0.0 && v != 1.0 {
                return Err(Error::InvalidData(format!(
                    "line {line}, column `{outcome}`: outcome must be 0 or 1, got `{cell}`"
                )));
            }
            cols[j].push(v);
        }
    }
    let y = std::mem::take(&mut cols[y_idx]);
    if y.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }
    let named = headers
        .into_iter()
        .zip(cols)
        .enumerate()
        .filter(|(j, _)| *j != y_idx)
        .map(|(_, c)| c)
        .collect();
    Dataset::new(y, named)
}
