//! Plain CSV import/export: header `f0,...,fk,label`, one sample per row.

use std::fmt::Write as _;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn write_csv(data: &Dataset) -> String {
    let mut out = String::new();
    for j in 0..data.num_features() {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label\n");
    for (row, label) in data.features().iter_rows().zip(data.labels()) {
        for v in row {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{label}");
    }
    out
}

/// Parse CSV text written by [`write_csv`]. The class count is
/// `max(label) + 1`.
pub fn read_csv(text: &str, name: impl Into<String>) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Csv {
        line: 1,
        message: "empty input".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let n_features = columns.len().saturating_sub(1);
    let header_ok = columns.last() == Some(&"label")
        && columns[..n_features]
            .iter()
            .enumerate()
            .all(|(j, c)| *c == format!("f{j}"));
    if !header_ok {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header f0,...,f{},label", n_features.saturating_sub(1)),
        });
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_features + 1 {
            return Err(Error::Csv {
                line: line_no,
                message: format!("expected {} cells, found {}", n_features + 1, cells.len()),
            });
        }
        for cell in &cells[..n_features] {
            values.push(cell.parse::<f64>().map_err(|e| Error::Csv {
                line: line_no,
                message: format!("bad feature {cell:?}: {e}"),
            })?);
        }
        labels.push(cells[n_features].parse::<usize>().map_err(|e| Error::Csv {
            line: line_no,
            message: format!("bad label {:?}: {e}", cells[n_features]),
        })?);
    }
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    let features = Matrix::from_vec(labels.len(), n_features, values)?;
    Dataset::new(features, labels, num_classes, name)
}

pub(crate) fn read_csv_file(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(&text, name)
}
