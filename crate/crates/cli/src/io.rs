//! Header-less, comma-separated, row-major numeric files.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))
}

/// Parses every non-blank line into a row of floats. Rows must all have the
/// same length.
pub fn parse_rows(text: &str, label: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::user(format!("{label}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::user(format!(
                        "{label}: line {line}, column {}: not a finite number: {field:?}",
                        col + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::user(format!(
                    "{label}: line {line} has {} fields, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::user(format!("{label}: no data")));
    }
    Ok(rows)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let label = path.display().to_string();
    let rows = parse_rows(&read_text(path)?, &label)?;
    let (t, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(t, m, |i, j| rows[i][j]))
}

/// A vector stored either as one column or as one row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>, CliError> {
    let label = path.display().to_string();
    let rows = parse_rows(&read_text(path)?, &label)?;
    if rows.len() > 1 && rows[0].len() > 1 {
        return Err(CliError::user(format!(
            "{label}: expected a single row or column, found {}x{}",
            rows.len(),
            rows[0].len()
        )));
    }
    Ok(DVector::from_vec(rows.into_iter().flatten().collect()))
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::internal(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
