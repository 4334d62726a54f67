//! Matrix Market and headerless CSV input and output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    MatrixMarket,
    Csv,
}

impl Format {
    /// `.mtx` is Matrix Market; anything else is CSV unless the file starts
    /// with a Matrix Market banner.
    pub fn detect(path: &Path, text: &str) -> Format {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext.eq_ignore_ascii_case("mtx") || text.starts_with("%%MatrixMarket") {
            Format::MatrixMarket
        } else {
            Format::Csv
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matrixmarket" | "mm" | "mtx" => Ok(Format::MatrixMarket),
            "csv" => Ok(Format::Csv),
            other => Err(Error::UnsupportedFormat(format!(
                "unknown format {other:?}; expected matrixmarket or csv"
            ))),
        }
    }
}

pub fn load_matrix(path: &Path, format: Option<Format>) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    match format.unwrap_or_else(|| Format::detect(path, &text)) {
        Format::MatrixMarket => parse_matrix_market(&text),
        Format::Csv => parse_csv(&text),
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as u64,
        column: column as u64,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with their 1-based character columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn parse_value<T: std::str::FromStr>(tok: (usize, &str), line: usize, what: &str) -> Result<T> {
    tok.1
        .parse()
        .map_err(|_| parse_err(line, tok.0, format!("expected {what}, found {:?}", tok.1)))
}

fn finite(v: f64, line: usize, column: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, column, format!("non-finite value {v}")))
    }
}

/// Real general Matrix Market, array or coordinate layout. Integer fields
/// are read as reals.
pub fn parse_matrix_market(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty file"))?;
    let head: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if head.len() != 5 || head[0] != "%%matrixmarket" || head[1] != "matrix" {
        return Err(parse_err(
            1,
            1,
            "expected banner \"%%MatrixMarket matrix <layout> <field> <symmetry>\"",
        ));
    }
    let coordinate = match head[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(Error::UnsupportedFormat(format!("layout {other:?}"))),
    };
    match head[3].as_str() {
        "real" | "double" | "integer" => {}
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{other} field; only real matrices are supported"
            )))
        }
    }
    if head[4] != "general" {
        return Err(Error::UnsupportedFormat(format!(
            "{} symmetry; only general matrices are supported",
            head[4]
        )));
    }

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim_start();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(2, 1, "missing size line"))?;
    let size_toks = tokens(size);
    let want = if coordinate { 3 } else { 2 };
    if size_toks.len() != want {
        return Err(parse_err(
            size_line,
            1,
            format!("size line needs {want} integers, found {}", size_toks.len()),
        ));
    }
    let rows: usize = parse_value(size_toks[0], size_line, "row count")?;
    let cols: usize = parse_value(size_toks[1], size_line, "column count")?;
    let mut m = DMatrix::zeros(rows, cols);

    if coordinate {
        let nnz: usize = parse_value(size_toks[2], size_line, "entry count")?;
        let mut seen = vec![false; rows * cols];
        let mut count = 0;
        for (ln, line) in body {
            let toks = tokens(line);
            if toks.len() != 3 {
                return Err(parse_err(
                    ln,
                    1,
                    format!("coordinate entry needs row, column and value, found {} fields", toks.len()),
                ));
            }
            let i: usize = parse_value(toks[0], ln, "row index")?;
            let j: usize = parse_value(toks[1], ln, "column index")?;
            if i == 0 || i > rows {
                return Err(parse_err(ln, toks[0].0, format!("row index {i} outside 1..={rows}")));
            }
            if j == 0 || j > cols {
                return Err(parse_err(ln, toks[1].0, format!("column index {j} outside 1..={cols}")));
            }
            let v = finite(parse_value(toks[2], ln, "real value")?, ln, toks[2].0)?;
            let slot = (j - 1) * rows + (i - 1);
            if seen[slot] {
                return Err(parse_err(ln, toks[0].0, format!("duplicate entry ({i}, {j})")));
            }
            seen[slot] = true;
            m[(i - 1, j - 1)] = v;
            count += 1;
            if count > nnz {
                return Err(parse_err(ln, 1, format!("more than the declared {nnz} entries")));
            }
        }
        if count < nnz {
            return Err(parse_err(
                text.lines().count(),
                1,
                format!("declared {nnz} entries, found {count}"),
            ));
        }
    } else {
        let total = rows * cols;
        let mut k = 0;
        for (ln, line) in body {
            for tok in tokens(line) {
                if k == total {
                    return Err(parse_err(ln, tok.0, format!("more than {total} values")));
                }
                let v = finite(parse_value(tok, ln, "real value")?, ln, tok.0)?;
                // column-major order
                m[(k % rows.max(1), k / rows.max(1))] = v;
                k += 1;
            }
        }
        if k < total {
            return Err(parse_err(
                text.lines().count(),
                1,
                format!("declared {total} values, found {k}"),
            ));
        }
    }
    DenseMatrix::new(m)
}

/// One matrix row per line, comma separated, no header. Blank lines are
/// skipped.
pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(line, k + 1, format!("field {}: expected a real number, found {field:?}", k + 1))
            })?;
            row.push(finite(v, line, k + 1)?);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    line,
                    1,
                    format!("row has {} fields, earlier rows have {w}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, 1, "no data rows"));
    }
    DenseMatrix::from_rows(&rows)
}

/// Array-layout Matrix Market with shortest round-trip decimal values.
pub fn matrix_market_string(a: &DenseMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", a.rows(), a.cols());
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            let _ = writeln!(s, "{:e}", a.get(i, j));
        }
    }
    s
}

pub fn csv_string(a: &DenseMatrix) -> String {
    let mut s = String::new();
    for i in 0..a.rows() {
        let row: Vec<String> = (0..a.cols()).map(|j| format!("{:e}", a.get(i, j))).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn save_matrix(path: &Path, a: &DenseMatrix, format: Format) -> Result<()> {
    let text = match format {
        Format::MatrixMarket => matrix_market_string(a),
        Format::Csv => csv_string(a),
    };
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}
