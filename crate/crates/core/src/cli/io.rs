//! CSV ingestion and emission.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::CliError;
use crate::Matrix;

/// A numeric table read from CSV.
#[derive(Clone, Debug)]
pub struct Table {
    pub values: Matrix,
    pub header: Option<Vec<String>>,
}

/// Reads comma-separated numeric rows. Row numbers in diagnostics are
/// one-based and count the header line when there is one.
pub fn read_csv(path: &Path, header: bool) -> Result<Table, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv_from(file, header)
}

pub fn read_csv_from<R: std::io::Read>(reader: R, header: bool) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names = if header {
        let h = rdr
            .headers()
            .map_err(|e| CliError::Data(format!("cannot read header: {e}")))?;
        Some(h.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let offset = usize::from(header) + 1;
    let mut width = names.as_ref().map(Vec::len);
    let mut cells = Vec::new();
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + offset;
        let rec = rec.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(CliError::Data(format!(
                    "row {row}: expected {w} fields, found {}",
                    rec.len()
                )));
            }
            _ => {}
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "row {row}, column {}: cannot parse {cell:?} as a number",
                    c + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "row {row}, column {}: value is not finite",
                    c + 1
                )));
            }
            cells.push(v);
        }
        n += 1;
    }
    let p = width.unwrap_or(0);
    Ok(Table {
        values: Matrix::from_row_slice(n, p, &cells),
        header: names,
    })
}

/// Writes rows without a header, using the shortest round-tripping decimal form.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        w.write_record(&row)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(f).map_err(|e| CliError::Io(e.to_string()))
}
