use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Column, Dataset};
use crate::error::{Error, Result};

/// Forced column type for [`read_csv`]. Columns without a hint are numeric
/// when every cell parses as a number and categorical otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Real,
    Text,
}

pub type SchemaHints = HashMap<String, ColumnKind>;

const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "null"];

pub fn read_csv(path: impl AsRef<Path>, hints: &SchemaHints) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, hints)
}

/// Reads a header-first, comma-separated table. Missing cells are rejected.
pub fn read_csv_from<R: Read>(reader: R, hints: &SchemaHints) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| ingest(1, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Ingest {
            line: 1,
            reason: "missing header row".into(),
        });
    }
    let mut cells: Vec<Vec<(u64, String)>> = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            ingest(line, e)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (j, cell) in record.iter().enumerate() {
            if MISSING.contains(&cell) {
                return Err(Error::Ingest {
                    line,
                    reason: format!("missing value in column `{}`", headers[j]),
                });
            }
            cells[j].push((line, cell.to_string()));
        }
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (name, col) in headers.into_iter().zip(cells) {
        let parsed: Vec<Option<f64>> = col.iter().map(|(_, s)| s.parse::<f64>().ok()).collect();
        let kind = hints.get(&name).copied().unwrap_or_else(|| {
            if parsed.iter().all(Option::is_some) {
                ColumnKind::Real
            } else {
                ColumnKind::Text
            }
        });
        let column = match kind {
            ColumnKind::Real => {
                let mut values = Vec::with_capacity(col.len());
                for ((line, raw), v) in col.iter().zip(parsed) {
                    match v {
                        Some(x) if x.is_finite() => values.push(x),
                        _ => {
                            return Err(Error::Ingest {
                                line: *line,
                                reason: format!("cannot parse `{raw}` in numeric column `{name}`"),
                            })
                        }
                    }
                }
                Column::Real(values)
            }
            ColumnKind::Text => Column::Text(col.into_iter().map(|(_, s)| s).collect()),
        };
        columns.push((name, column));
    }
    Dataset::new(columns)
}

fn ingest(line: u64, e: csv::Error) -> Error {
    Error::Ingest {
        line,
        reason: e.to_string(),
    }
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(ds, std::io::BufWriter::new(file))
}

/// Numbers are written in shortest round-trip form.
pub fn write_csv_to<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(ds.names()).map_err(to_io)?;
    let cols: Vec<&Column> = ds.columns().map(|(_, c)| c).collect();
    for r in 0..ds.n_rows() {
        let row = cols.iter().map(|c| match c {
            Column::Real(v) => format!("{}", v[r]),
            Column::Text(v) => v[r].clone(),
        });
        w.write_record(row).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}
