//! Columnar dataset of a binary outcome plus named numeric columns.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Binary outcome and named numeric columns, all of length `n`.
///
/// Construction validates that outcomes are exactly 0 or 1, every column
/// has `n` finite entries and `n >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    columns: BTreeMap<String, Vec<f64>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData(format!(
                "outcome at row {} is {}, expected 0 or 1",
                i + 1,
                y[i]
            )));
        }
        let mut map = BTreeMap::new();
        for (name, col) in columns {
            if col.len() != y.len() {
                return Err(Error::InvalidData(format!(
                    "column `{name}` has {} rows, outcome has {}",
                    col.len(),
                    y.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "column `{name}` has a non-finite value at row {}",
                    i + 1
                )));
            }
            if map.insert(name.clone(), col).is_some() {
                return Err(Error::InvalidData(format!("column `{name}` given twice")));
            }
        }
        Ok(Dataset { y, columns: map })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Copy of this dataset with `name` replaced by the constant `value`.
    pub fn with_constant(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        let col = out
            .columns
            .get_mut(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        col.iter_mut().for_each(|v| *v = value);
        Ok(out)
    }

    /// Rows selected by index, duplicates allowed (bootstrap resamples).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i]).collect()))
                .collect(),
        }
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_outcome() {
        let err = Dataset::new(vec![0.0, 2.0], vec![]).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn rejects_length_mismatch_and_nan() {
        assert!(Dataset::new(vec![0.0, 1.0], vec![("a".into(), vec![1.0])]).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], vec![("a".into(), vec![1.0, f64::NAN])]).is_err());
        assert!(Dataset::new(vec![], vec![]).is_err());
    }

    #[test]
    fn constant_override_and_resample() {
        let d = Dataset::new(vec![0.0, 1.0, 1.0], vec![("a".into(), vec![1.0, 2.0, 3.0])]).unwrap();
        let c = d.with_constant("a", 7.0).unwrap();
        assert_eq!(c.column("a").unwrap(), &[7.0, 7.0, 7.0]);
        let r = d.select_rows(&[2, 2, 0]);
        assert_eq!(r.y(), &[1.0, 1.0, 0.0]);
        assert_eq!(r.column("a").unwrap(), &[3.0, 3.0, 1.0]);
        assert!(matches!(d.column("zz"), Err(Error::UnknownColumn(_))));
    }
}
