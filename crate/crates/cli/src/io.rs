//! CSV ingestion and export.
//!
//! Rows are numbered as in the file, the header being row 1, so the first
//! data row is row 2.

use std::path::Path;

use ivqr_core::QuantileDataset;

use crate::config::RoleNames;
use crate::error::{CliError, CliResult};

/// A loaded dataset plus what was dropped on the way in.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: QuantileDataset,
    pub rows_read: usize,
    /// Rows skipped because a role column was empty or `NA`.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null")
}

/// Reads the role columns of `path`; other columns are ignored.
pub fn load_csv(path: &Path, roles: &RoleNames) -> CliResult<LoadedData> {
    if !path.exists() {
        return Err(CliError::Data(format!("input file {} does not exist", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header of {}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();

    let names: Vec<String> = roles.all().cloned().collect();
    let positions = names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Config(format!("column \"{name}\" not found in {}", path.display())))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut columns = vec![Vec::new(); names.len()];
    let (mut rows_read, mut dropped) = (0, 0);
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        rows_read += 1;
        let cells: Vec<&str> = positions.iter().map(|&p| record.get(p).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }
        for ((col, cell), name) in columns.iter_mut().zip(&cells).zip(&names) {
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Data(format!("row {row}, column \"{name}\": cannot parse `{cell}` as a number")))?;
            col.push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::Data(format!(
            "no usable rows in {} ({rows_read} read, {dropped} with missing values)",
            path.display()
        )));
    }

    let named = names.iter().cloned().zip(columns).collect();
    let d: Vec<&str> = roles.d.iter().map(String::as_str).collect();
    let x: Vec<&str> = roles.x.iter().map(String::as_str).collect();
    let z: Vec<&str> = roles.z.iter().map(String::as_str).collect();
    let dataset = QuantileDataset::from_named(named, &roles.y, &d, &x, &z)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(LoadedData {
        dataset,
        rows_read,
        dropped_rows: dropped,
    })
}

/// Writes every column of `data`; values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_csv(path: &Path, data: &QuantileDataset) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_record(data.names()).map_err(|e| CliError::Io(e.to_string()))?;
    for i in 0..data.n() {
        let row: Vec<String> = data.columns().iter().map(|c| c[i].to_string()).collect();
        w.write_record(&row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Role names of a dataset, for reading back what [`write_csv`] wrote.
pub fn role_names(data: &QuantileDataset) -> RoleNames {
    let names = data.names();
    let r = data.roles();
    let pick = |idx: &[usize]| idx.iter().map(|&i| names[i].clone()).collect();
    RoleNames {
        y: names[r.y].clone(),
        d: pick(&r.d),
        x: pick(&r.x),
        z: pick(&r.z),
    }
}
