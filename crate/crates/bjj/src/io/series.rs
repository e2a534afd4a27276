//! Time-series CSV format: UTF-8, LF line endings, a `t,<name>` header row
//! and values at 17 significant digits, so that write -> read -> write is
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}, line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

/// 17-significant-digit scientific notation; enough to reproduce any f64
/// exactly on read-back.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a two-column series with header `t,<value_name>`.
pub fn write_series(path: &Path, value_name: &str, rows: &[(f64, f64)]) -> Result<(), SeriesError> {
    let mut out = String::with_capacity(rows.len() * 48 + 16);
    out.push_str("t,");
    out.push_str(value_name);
    out.push('\n');
    for &(t, v) in rows {
        out.push_str(&format_value(t));
        out.push(',');
        out.push_str(&format_value(v));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a multi-column table with the given header names.
pub fn write_columns(
    path: &Path,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), SeriesError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a two-column series, returning the rows and the value-column name.
pub fn read_series(path: &Path) -> Result<(Vec<(f64, f64)>, String), SeriesError> {
    let text = fs::read_to_string(path).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| SeriesError::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut cols = header.split(',');
    let t_name = cols.next().unwrap_or_default();
    let value_name = cols.next().unwrap_or_default().to_string();
    if t_name != "t" || value_name.is_empty() || cols.next().is_some() {
        return Err(SeriesError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `t,<name>`, got `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let parse = |cell: Option<&str>| -> Result<f64, SeriesError> {
            cell.ok_or_else(|| SeriesError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "missing column".into(),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| SeriesError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: e.to_string(),
            })
        };
        let t = parse(cells.next())?;
        let v = parse(cells.next())?;
        if cells.next().is_some() {
            return Err(SeriesError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "too many columns".into(),
            });
        }
        rows.push((t, v));
    }
    Ok((rows, value_name))
}
