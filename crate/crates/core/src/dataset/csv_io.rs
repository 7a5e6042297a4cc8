//! CSV ingestion: UTF-8, comma-separated, header row, one label column.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::LabeledTable;

/// Load a labeled table from CSV. Labels are strings mapped to class indices
/// in first-appearance order; every other cell must parse as a finite number.
pub fn load_csv<P: AsRef<Path>>(path: P, label_column: &str) -> Result<LabeledTable> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;

    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut class_names: Vec<String> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::ParseError {
                row: row_idx,
                col: 0,
                msg: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (col_idx, field) in record.iter().enumerate() {
            if col_idx == label_idx {
                let class = match class_names.iter().position(|c| c == field) {
                    Some(c) => c,
                    None => {
                        class_names.push(field.to_string());
                        class_names.len() - 1
                    }
                };
                labels.push(class);
            } else {
                let v: f64 = field.trim().parse().map_err(|e| Error::ParseError {
                    row: row_idx,
                    col: col_idx,
                    msg: format!("'{field}': {e}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::ParseError {
                        row: row_idx,
                        col: col_idx,
                        msg: format!("non-finite value '{field}'"),
                    });
                }
                values.push(v);
            }
        }
        n_rows += 1;
    }

    if n_rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = feature_names.len();
    let features = Array2::from_shape_vec((n_rows, d), values)
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    LabeledTable::new(features, labels, feature_names, class_names)
}

/// Write a table as CSV with the label column last.
pub fn save_csv<P: AsRef<Path>>(table: &LabeledTable, path: P, label_column: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = table.feature_names().to_vec();
    header.push(label_column.to_string());
    writer.write_record(&header)?;
    for i in 0..table.n_rows() {
        let mut record: Vec<String> =
            table.features().row(i).iter().map(|v| format!("{v}")).collect();
        record.push(table.class_names()[table.labels()[i]].clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
