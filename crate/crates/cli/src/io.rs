//! Matrix CSV: a `rows,cols` header, then one comma-separated row per line.
//!
//! Values are written with Rust's shortest round-trip formatting, so
//! save followed by load is lossless for every finite double.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bnmf_core::DenseMatrix;

use crate::error::{CliError, CliResult};

pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        for (j, x) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{x:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> CliResult<()> {
    write_file(path, &matrix_to_csv(m))
}

pub fn load_matrix(path: &Path) -> CliResult<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}

/// `origin` labels parse errors.
pub fn parse_matrix(text: &str, origin: &str) -> CliResult<DenseMatrix> {
    let err = |line: usize, message: String| CliError::Parse { path: origin.to_string(), line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    if dims.len() != 2 {
        return Err(err(hline, format!("expected header 'rows,cols', got '{header}'")));
    }
    let parse_dim = |s: &str| s.parse::<usize>().ok().filter(|&d| d > 0);
    let (rows, cols) = match (parse_dim(dims[0]), parse_dim(dims[1])) {
        (Some(r), Some(c)) => (r, c),
        _ => return Err(err(hline, format!("header dimensions must be positive integers, got '{header}'"))),
    };

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (lno, line) in lines {
        if seen == rows {
            return Err(err(lno, format!("more than the {rows} rows declared in the header")));
        }
        let before = data.len();
        for field in line.split(',') {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(lno, format!("'{}' is not a number", field.trim())))?;
            if !x.is_finite() {
                return Err(err(lno, format!("non-finite value '{}'", field.trim())));
            }
            data.push(x);
        }
        if data.len() - before != cols {
            return Err(err(lno, format!("expected {cols} values, found {}", data.len() - before)));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(err(text.lines().count(), format!("header declares {rows} rows, found {seen}")));
    }
    Ok(DenseMatrix::new(rows, cols, data)?)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
