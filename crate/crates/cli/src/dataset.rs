use std::path::Path;

use oob_bands::Dataset;

use crate::app::CliError;

/// Reads a CSV with a header row; every column is numeric and the last one
/// is the response. Errors name the offending line and column.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
        .clone();
    let width = header.len();
    if width < 2 {
        return Err(CliError::Runtime(format!(
            "{}: need at least one feature column and a response column",
            path.display()
        )));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(CliError::Runtime(format!(
                "{}: line {line}: expected {width} columns, found {}",
                path.display(),
                record.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::Runtime(format!(
                    "{}: line {line}, column {} ({}): not a finite number: {field:?}",
                    path.display(),
                    col + 1,
                    &header[col]
                ))
            })?;
            if col + 1 == width {
                y.push(value);
            } else {
                x.push(value);
            }
        }
    }
    if y.is_empty() {
        return Err(CliError::Runtime(format!("{}: no data rows", path.display())));
    }
    Dataset::from_flat(x, width - 1, y).map_err(|e| CliError::Runtime(e.to_string()))
}
