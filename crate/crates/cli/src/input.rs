use std::fmt;
use std::fs;
use std::path::Path;

use crt_logit::Dataset;
use ndarray::{Array1, Array2};

/// Input failures, mapped to exit codes by the caller.
#[derive(Debug)]
pub enum InputError {
    /// Unreadable or unparsable content (exit 2).
    Malformed(String),
    /// Well-formed inputs whose shapes disagree (exit 3).
    DimensionMismatch(String),
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputError::Malformed(m) | InputError::DimensionMismatch(m) => f.write_str(m),
        }
    }
}

fn malformed(path: &Path, line: usize, msg: impl fmt::Display) -> InputError {
    InputError::Malformed(format!("{}:{line}: {msg}", path.display()))
}

fn read_text(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError::Malformed(format!("{}: {e}", path.display())))
}

/// Numeric CSV table. Rows must all have the same width; empty fields and
/// non-finite values are rejected with the offending line number.
pub fn read_matrix(path: &Path, header: bool) -> Result<Vec<Vec<f64>>, InputError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(path, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(k, field)| {
                if field.is_empty() {
                    return Err(malformed(path, line, format!("missing value in column {}", k + 1)));
                }
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(malformed(
                        path,
                        line,
                        format!("column {}: '{field}' is not a finite number", k + 1),
                    )),
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(malformed(
                    path,
                    line,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(InputError::Malformed(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

/// Binary response: one column of 0/1 values.
pub fn read_response(path: &Path, header: bool) -> Result<Vec<f64>, InputError> {
    let rows = read_matrix(path, header)?;
    if rows[0].len() != 1 {
        return Err(InputError::Malformed(format!(
            "{}: response must have a single column, found {}",
            path.display(),
            rows[0].len()
        )));
    }
    let offset = usize::from(header) + 1;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r[0] == 0.0 || r[0] == 1.0 {
                Ok(r[0])
            } else {
                Err(InputError::Malformed(format!(
                    "{}: response row {} is {} (expected 0 or 1)",
                    path.display(),
                    i + offset,
                    r[0]
                )))
            }
        })
        .collect()
}

pub fn read_dataset(x_path: &Path, y_path: &Path, header: bool) -> Result<Dataset, InputError> {
    let rows = read_matrix(x_path, header)?;
    let y = read_response(y_path, header)?;
    if rows.len() != y.len() {
        return Err(InputError::DimensionMismatch(format!(
            "design has {} rows but response has {} entries",
            rows.len(),
            y.len()
        )));
    }
    let (n, p) = (rows.len(), rows[0].len());
    let x = Array2::from_shape_fn((n, p), |(i, k)| rows[i][k]);
    Dataset::new(x.view(), Array1::from(y)).map_err(|e| InputError::Malformed(e.to_string()))
}

/// Support indices (0-based), separated by commas, whitespace or newlines.
/// Lines starting with `#` are ignored.
pub fn read_truth(path: &Path, p: usize) -> Result<Vec<usize>, InputError> {
    let text = read_text(path)?;
    let mut support = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let j: usize = tok
                .parse()
                .map_err(|_| malformed(path, i + 1, format!("'{tok}' is not a variable index")))?;
            if j >= p {
                return Err(InputError::DimensionMismatch(format!(
                    "{}:{}: index {j} out of range for {p} variables",
                    path.display(),
                    i + 1
                )));
            }
            support.push(j);
        }
    }
    Ok(support)
}

/// `key = value` lines (blank lines and `#` comments allowed) turned into
/// long flags. `true` yields a bare switch and `false` drops the key.
pub fn config_args(path: &Path) -> Result<Vec<String>, InputError> {
    let text = read_text(path)?;
    let mut args = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(path, i + 1, "expected key = value"))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key.starts_with('-') {
            return Err(malformed(path, i + 1, format!("bad key '{key}'")));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}
