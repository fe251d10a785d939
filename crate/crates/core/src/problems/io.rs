//! Dense matrix ingestion from MatrixMarket and CSV files.
//!
//! MatrixMarket: `coordinate` and `array` layouts with `real`, `integer` or
//! `pattern` fields and `general`, `symmetric` or `skew-symmetric` symmetry.
//! CSV: one row per line, comma separated, no header; blank lines are
//! ignored.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
}

impl MatrixFormat {
    /// `.mtx`/`.mm` → MatrixMarket, `.csv` → CSV.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "mtx" | "mm" => Some(MatrixFormat::MatrixMarket),
            "csv" => Some(MatrixFormat::Csv),
            _ => None,
        }
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(&text, path),
        MatrixFormat::Csv => parse_csv(&text, path),
    }
}

/// Loads `A` and a companion right-hand side `b`, which must have one column
/// and `A.nrows()` rows.
pub fn load_system(a_path: &Path, b_path: &Path) -> Result<(Matrix, Vector)> {
    let fmt = |p: &Path| {
        MatrixFormat::from_path(p).ok_or_else(|| Error::Parse {
            path: p.to_path_buf(),
            line: 0,
            reason: "unknown extension (expected .mtx, .mm or .csv)".into(),
        })
    };
    let a = load_matrix(a_path, fmt(a_path)?)?;
    let b = load_matrix(b_path, fmt(b_path)?)?;
    if b.ncols() != 1 {
        return Err(Error::DimensionMismatch {
            what: "right-hand side columns",
            expected: 1,
            found: b.ncols(),
        });
    }
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            what: "right-hand side rows",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok((a, b.column(0).into_owned()))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        reason: reason.into(),
    }
}

#[derive(PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

fn parse_matrix_market(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(path, 1, "expected `%%MatrixMarket matrix <layout> <field> <symmetry>`"));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(path, 1, format!("unsupported layout `{other}`"))),
    };
    let pattern = match tokens[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(parse_err(path, 1, format!("unsupported field `{other}`"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let last_line = text.lines().count();

    let (size_line, size) = data
        .next()
        .ok_or_else(|| parse_err(path, last_line + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(path, size_line, format!("bad size line: {e}")))?;
    let expected_fields = if coordinate { 3 } else { 2 };
    if dims.len() != expected_fields {
        return Err(parse_err(
            path,
            size_line,
            format!("size line needs {expected_fields} integers"),
        ));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if symmetry != Symmetry::General && rows != cols {
        return Err(parse_err(path, size_line, "symmetric matrix must be square"));
    }
    let mut m = Matrix::zeros(rows, cols);

    let parse_value = |line_no: usize, tok: Option<&str>| -> Result<f64> {
        let tok = tok.ok_or_else(|| parse_err(path, line_no, "missing value"))?;
        tok.parse::<f64>()
            .map_err(|e| parse_err(path, line_no, format!("bad value `{tok}`: {e}")))
    };

    if coordinate {
        let nnz = dims[2];
        for k in 0..nnz {
            let (line_no, line) = data.next().ok_or_else(|| {
                parse_err(
                    path,
                    last_line + 1,
                    format!("unexpected end of file: {} of {nnz} entries missing", nnz - k),
                )
            })?;
            let mut it = line.split_whitespace();
            let mut index = |name: &str, bound: usize| -> Result<usize> {
                let tok = it
                    .next()
                    .ok_or_else(|| parse_err(path, line_no, format!("missing {name} index")))?;
                let v: usize = tok
                    .parse()
                    .map_err(|e| parse_err(path, line_no, format!("bad {name} index: {e}")))?;
                if v == 0 || v > bound {
                    return Err(parse_err(path, line_no, format!("{name} index {v} out of range")));
                }
                Ok(v - 1)
            };
            let i = index("row", rows)?;
            let j = index("column", cols)?;
            let v = if pattern { 1.0 } else { parse_value(line_no, it.next())? };
            m[(i, j)] = v;
            if i != j {
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => m[(j, i)] = v,
                    Symmetry::Skew => m[(j, i)] = -v,
                }
            }
        }
    } else {
        // column-major; symmetric variants store the lower triangle only
        let mut slots = Vec::new();
        for j in 0..cols {
            let start = match symmetry {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::Skew => j + 1,
            };
            for i in start..rows {
                slots.push((i, j));
            }
        }
        let total = slots.len();
        for (k, (i, j)) in slots.into_iter().enumerate() {
            let (line_no, line) = data.next().ok_or_else(|| {
                parse_err(
                    path,
                    last_line + 1,
                    format!("unexpected end of file: {} of {total} entries missing", total - k),
                )
            })?;
            let v = parse_value(line_no, line.split_whitespace().next())?;
            m[(i, j)] = v;
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => m[(j, i)] = v,
                Symmetry::Skew => m[(j, i)] = -v,
            }
        }
    }
    if let Some((line_no, _)) = data.next() {
        return Err(parse_err(path, line_no, "trailing data after the last entry"));
    }
    Ok(m)
}

fn parse_csv(text: &str, path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .map_err(|e| parse_err(path, line_no, format!("bad value `{tok}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected {w} fields, found {}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    let width = width.ok_or_else(|| parse_err(path, 1, "no data rows"))?;
    Ok(Matrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

/// Writes `m` as a MatrixMarket `array real general` file with 17 significant
/// digits, so [`load_matrix`] recovers it bit for bit.
pub fn write_matrix_market(path: &Path, m: &Matrix) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    let mut body = format!(
        "%%MatrixMarket matrix array real general\n{} {}\n",
        m.nrows(),
        m.ncols()
    );
    for v in m.iter() {
        body.push_str(&format!("{v:.16e}\n"));
    }
    out.write_all(body.as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}
