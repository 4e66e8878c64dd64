//! Reader and writer for the LIBSVM sparse text format:
//! `<label> <index>:<value> ...`, one sample per line, 1-based ascending
//! feature indices.
//!
//! Labels greater than zero map to `+1`, all others (including `0`) to `-1`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmData {
    /// Dense `n x d` feature matrix; `d` is the largest index seen.
    pub features: DMatrix<f64>,
    /// Labels in `{-1, +1}`.
    pub labels: Vec<f64>,
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<LibsvmData> {
    parse_libsvm(BufReader::new(File::open(path)?))
}

pub fn parse_libsvm(reader: impl BufRead) -> Result<LibsvmData> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label '{label_tok}'"),
        })?;
        if !label.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: "non-finite label".into(),
            });
        }
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });

        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected index:value, got '{tok}'"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index '{idx}'"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature value '{val}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("feature index {idx} is not ascending (after {last})"),
                });
            }
            last = idx;
            row.push((idx - 1, val));
        }
        dim = dim.max(last);
        rows.push(row);
    }

    let mut features = DMatrix::zeros(rows.len(), dim);
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            features[(r, c)] = v;
        }
    }
    Ok(LibsvmData { features, labels })
}

/// Writes nonzero features only; values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_libsvm(mut writer: impl Write, data: &LibsvmData) -> Result<()> {
    for (r, &label) in data.labels.iter().enumerate() {
        write!(writer, "{}", if label > 0.0 { "+1" } else { "-1" })?;
        for (c, &v) in data.features.row(r).iter().enumerate() {
            if v != 0.0 {
                write!(writer, " {}:{}", c + 1, v)?;
            }
        }
        writeln!(writer)?;
    }
    Ok(())
}

pub fn save_libsvm(path: impl AsRef<Path>, data: &LibsvmData) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    write_libsvm(&mut w, data)?;
    w.flush()?;
    Ok(())
}
