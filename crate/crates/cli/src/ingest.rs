//! CSV ingestion.

use std::path::Path;

use warpfit::model::{AffineMap, Dataset};

use crate::config::DataSection;
use crate::error::{CliError, CliResult};

/// Parsed data plus the number of rows dropped as blank or NaN.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: Dataset,
    pub dropped: usize,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> CliResult<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| CliError::Data {
        message: format!("column `{name}` not found; header is [{}]", headers.iter().collect::<Vec<_>>().join(", ")),
        row: Some(1),
        column: Some(name.to_string()),
    })
}

/// `None` for a blank or NaN cell.
fn parse_cell(cell: &str, line: usize, column: &str) -> CliResult<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_nan() => Ok(None),
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(CliError::Data {
            message: format!("non-numeric value `{cell}` in column `{column}` at line {line}"),
            row: Some(line),
            column: Some(column.to_string()),
        }),
    }
}

/// Parse CSV text. Row numbers in errors are 1-based file lines.
pub fn parse_csv(text: &str, section: &DataSection) -> CliResult<Ingested> {
    if !section.delimiter.is_ascii() {
        return Err(CliError::Config(format!("data.delimiter: `{}` is not a single-byte character", section.delimiter)));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(section.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CliError::data(format!("cannot read header: {e}")))?.clone();
    if headers.iter().all(|h| h.trim().is_empty()) {
        return Err(CliError::Data { message: "missing header row".into(), row: Some(1), column: None });
    }
    let ix = column_index(&headers, &section.x)?;
    let iy = column_index(&headers, &section.y)?;

    // the csv reader skips empty lines; count them from the raw text
    let mut dropped = text.lines().skip(1).filter(|l| l.is_empty()).count();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            CliError::Data { message: format!("malformed row: {e}"), row: line, column: None }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let x = parse_cell(record.get(ix).unwrap_or(""), line, &section.x)?;
        let y = parse_cell(record.get(iy).unwrap_or(""), line, &section.y)?;
        match (x, y) {
            (Some(x), Some(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ => dropped += 1,
        }
    }
    if xs.len() < 2 {
        return Err(CliError::data(format!("{} usable rows; at least 2 are needed", xs.len())));
    }
    let data = match section.window {
        Some([lo, hi]) => {
            if let Some(x) = xs.iter().find(|x| **x < lo || **x > hi) {
                return Err(CliError::data(format!("x = {x} lies outside the window [{lo}, {hi}]")));
            }
            Dataset::with_affine(xs, ys, AffineMap::from_window(lo, hi)?)?
        }
        None => Dataset::new(xs, ys)?,
    };
    Ok(Ingested { data, dropped })
}

pub fn ingest_csv(path: &Path, section: &DataSection) -> CliResult<Ingested> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let out = parse_csv(&text, section)?;
    if out.dropped > 0 {
        log::warn!("{}: dropped {} blank or NaN rows", path.display(), out.dropped);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section() -> DataSection {
        DataSection::default()
    }

    #[test]
    fn reads_named_columns_in_any_order() {
        let got = parse_csv("y,x\n1,0\n2,1\n0,2\n", &section()).unwrap();
        assert_eq!(got.data.x_raw(), &[0.0, 1.0, 2.0]);
        assert_eq!(got.data.y(), &[1.0, 2.0, 0.0]);
        assert_eq!(got.dropped, 0);
    }

    #[test]
    fn blank_and_nan_rows_are_dropped() {
        let got = parse_csv("x,y\n0,1\n\n1,NaN\n2,3\n3,\n4,5\n", &section()).unwrap();
        assert_eq!(got.data.n(), 3);
        assert_eq!(got.dropped, 3);
    }

    #[test]
    fn bad_cell_reports_line_and_column() {
        let err = parse_csv("x,y\n0,1\n1,abc\n", &section()).unwrap_err();
        match err {
            CliError::Data { row, column, .. } => {
                assert_eq!(row, Some(3));
                assert_eq!(column.as_deref(), Some("y"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semicolon_delimiter() {
        let s = DataSection { delimiter: ';', ..section() };
        assert_eq!(parse_csv("x;y\n0;1\n1;2\n", &s).unwrap().data.n(), 2);
    }

    #[test]
    fn window_outside_data_is_rejected() {
        let s = DataSection { window: Some([0.0, 1.0]), ..section() };
        assert!(parse_csv("x,y\n0,1\n2,2\n", &s).is_err());
        assert!(parse_csv("x,y\n0,1\n0.5,2\n", &s).is_ok());
    }
}
