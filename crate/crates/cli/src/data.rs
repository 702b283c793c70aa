//! Headered CSV ingestion. Referenced columns are typed by the config:
//! factor columns stay labels, everything else parses as f64. Missing cells
//! are input errors; nothing is imputed or silently dropped.

use std::collections::HashSet;
use std::path::Path;

use anyhow::{bail, Context};

use ordglm::{Column, ObservationTable};

pub fn read_table(
    path: &Path,
    numeric_columns: &[String],
    factor_columns: &[String],
) -> anyhow::Result<ObservationTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open data file {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("data file has no header row")?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let find = |name: &String| -> anyhow::Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column `{name}` not found in the data file"))
    };

    let mut seen = HashSet::new();
    let mut numeric: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for name in numeric_columns {
        if !seen.insert(name.clone()) {
            continue;
        }
        numeric.push((name.clone(), find(name)?, Vec::new()));
    }
    let mut labels: Vec<(String, usize, Vec<String>)> = Vec::new();
    for name in factor_columns {
        if !seen.insert(name.clone()) {
            bail!("column `{name}` is referenced both as numeric and as a factor");
        }
        labels.push((name.clone(), find(name)?, Vec::new()));
    }

    for (row_index, record) in reader.records().enumerate() {
        // Header is line 1, first record line 2.
        let line = row_index + 2;
        let record = record.with_context(|| format!("malformed CSV at line {line}"))?;
        for (name, idx, values) in &mut numeric {
            let raw = record
                .get(*idx)
                .with_context(|| format!("line {line}: missing field for column `{name}`"))?;
            if raw.is_empty() {
                bail!("line {line}: empty value in column `{name}` (missing values are not supported)");
            }
            let value: f64 = raw
                .parse()
                .with_context(|| format!("line {line}: column `{name}`: `{raw}` is not a number"))?;
            if !value.is_finite() {
                bail!("line {line}: column `{name}`: non-finite value");
            }
            values.push(value);
        }
        for (name, idx, values) in &mut labels {
            let raw = record
                .get(*idx)
                .with_context(|| format!("line {line}: missing field for column `{name}`"))?;
            if raw.is_empty() {
                bail!("line {line}: empty value in column `{name}` (missing values are not supported)");
            }
            values.push(raw.to_string());
        }
    }

    let mut columns: Vec<(String, Column)> = Vec::new();
    for (name, _, values) in numeric {
        columns.push((name, Column::Numeric(values)));
    }
    for (name, _, values) in labels {
        columns.push((name, Column::Label(values)));
    }
    if columns.is_empty() || columns[0].1.is_empty() {
        bail!("data file {} has no rows", path.display());
    }
    Ok(ObservationTable::from_columns(columns)?)
}
