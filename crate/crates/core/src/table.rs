//! Immutable columnar observation table.
//!
//! A table holds named columns of two kinds: numeric (responses, covariates,
//! times) and label (ordinal factor observations). Level ordering is never
//! inferred from the table; it always comes from the model specification.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Label(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Label(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ObservationTable {
    n_rows: usize,
    columns: Vec<(String, Column)>,
}

impl ObservationTable {
    /// Build a table from named columns. All columns must have the same
    /// length and distinct names.
    pub fn from_columns(columns: Vec<(String, Column)>) -> Result<Self> {
        let n_rows = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
        for (name, col) in &columns {
            if col.len() != n_rows {
                return Err(Error::DimensionMismatch(format!(
                    "column `{}` has {} rows, expected {}",
                    name,
                    col.len(),
                    n_rows
                )));
            }
        }
        for (i, (name, _)) in columns.iter().enumerate() {
            if columns[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::InvalidInput(format!("duplicate column name `{name}`")));
            }
        }
        Ok(Self { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Label(_) => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "numeric",
            }),
        }
    }

    pub fn labels(&self, name: &str) -> Result<&[String]> {
        match self.column(name)? {
            Column::Label(v) => Ok(v),
            Column::Numeric(_) => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "a label column",
            }),
        }
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_columns_rejected() {
        let err = ObservationTable::from_columns(vec![
            ("a".into(), Column::Numeric(vec![1.0, 2.0])),
            ("b".into(), Column::Numeric(vec![1.0])),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = ObservationTable::from_columns(vec![
            ("a".into(), Column::Numeric(vec![1.0])),
            ("a".into(), Column::Numeric(vec![2.0])),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn typed_access() {
        let table = ObservationTable::from_columns(vec![
            ("y".into(), Column::Numeric(vec![1.0, 2.0])),
            ("grade".into(), Column::Label(vec!["a".into(), "b".into()])),
        ])
        .unwrap();
        assert_eq!(table.numeric("y").unwrap(), &[1.0, 2.0]);
        assert_eq!(table.labels("grade").unwrap()[1], "b");
        assert!(matches!(table.numeric("grade"), Err(Error::ColumnKind { .. })));
        assert!(matches!(table.numeric("zzz"), Err(Error::MissingColumn(_))));
    }
}
