//! Plain CSV: a header row, comma separators, `.` as the decimal point.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Parses CSV text into a matrix plus its header labels.
pub fn parse_csv(text: &str) -> Result<(DMatrix<f64>, Vec<String>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Csv {
        row: 0,
        reason: "empty file".into(),
    })?;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let cols = labels.len();

    let mut values = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Csv {
                row: lineno,
                reason: format!("expected {cols} fields, found {}", fields.len()),
            });
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                row: lineno,
                reason: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row: lineno,
                    reason: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Csv {
            row: 1,
            reason: "no data rows".into(),
        });
    }
    Ok((DMatrix::from_row_slice(rows, cols, &values), labels))
}

/// Shortest representation that parses back to the same f64.
fn format_value(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn format_csv(data: &DMatrix<f64>, labels: Option<&[String]>) -> Result<String> {
    let cols = data.ncols();
    let header = match labels {
        Some(l) if l.len() == cols => l.join(","),
        Some(l) => {
            return Err(Error::shape(format!(
                "{} column labels for {cols} columns",
                l.len()
            )))
        }
        None => (0..cols).map(|c| format!("c{c}")).collect::<Vec<_>>().join(","),
    };
    let mut out = header;
    out.push('\n');
    for r in 0..data.nrows() {
        let row: Vec<String> = (0..cols).map(|c| format_value(data[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}
