//! Parameter checkpoints.
//!
//! Binary layout, all little-endian: the 8-byte magic `HOSLGCN1`, then for
//! `W₁` and `W₂` in turn a `u64` row count, a `u64` column count and the
//! row-major `f64` entries.
//!
//! CSV layout: a `matrix,row,col,value` header followed by one line per
//! entry, with `matrix` either `w1` or `w2`. Values use the shortest
//! round-tripping decimal form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GcnParams;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

const MAGIC: &[u8; 8] = b"HOSLGCN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointFormat {
    Binary,
    Csv,
}

pub fn save_params(params: &GcnParams, path: &Path, format: CheckpointFormat) -> Result<()> {
    let bytes = match format {
        CheckpointFormat::Binary => {
            let mut out = MAGIC.to_vec();
            for m in [params.w1(), params.w2()] {
                out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
                out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
                for v in m.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out
        }
        CheckpointFormat::Csv => {
            let mut out = String::from("matrix,row,col,value\n");
            for (name, m) in [("w1", params.w1()), ("w2", params.w2())] {
                for i in 0..m.rows() {
                    for j in 0..m.cols() {
                        out.push_str(&format!("{name},{i},{j},{}\n", m.get(i, j)));
                    }
                }
            }
            out.into_bytes()
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path, format: CheckpointFormat) -> Result<GcnParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w1, w2) = match format {
        CheckpointFormat::Binary => decode_binary(&bytes).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        })?,
        CheckpointFormat::Csv => decode_csv(path, &bytes)?,
    };
    GcnParams::new(w1, w2)
}

fn decode_binary(bytes: &[u8]) -> std::result::Result<(DenseMatrix, DenseMatrix), String> {
    let mut rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or("missing checkpoint magic")?;
    let mut take = |len: usize| -> std::result::Result<&[u8], String> {
        if rest.len() < len {
            return Err("truncated checkpoint".into());
        }
        let (head, tail) = rest.split_at(len);
        rest = tail;
        Ok(head)
    };
    let mut matrices = Vec::with_capacity(2);
    for _ in 0..2 {
        let rows = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let len = rows.checked_mul(cols).ok_or("matrix size overflows")?;
        let body = take(len.checked_mul(8).ok_or("matrix size overflows")?)?;
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        matrices.push(DenseMatrix::new(rows, cols, data).map_err(|e| e.to_string())?);
    }
    if take(1).is_ok() {
        return Err("trailing bytes after checkpoint".into());
    }
    let w2 = matrices.pop().unwrap();
    let w1 = matrices.pop().unwrap();
    Ok((w1, w2))
}

fn decode_csv(path: &Path, bytes: &[u8]) -> Result<(DenseMatrix, DenseMatrix)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(0, e.to_string()))?;
    let mut entries: [Vec<(usize, usize, f64)>; 2] = [Vec::new(), Vec::new()];
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [name, i, j, v] = fields[..] else {
            return Err(parse_err(lineno, "expected 4 fields".into()));
        };
        let slot = match name {
            "w1" => 0,
            "w2" => 1,
            other => return Err(parse_err(lineno, format!("unknown matrix {other:?}"))),
        };
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| parse_err(lineno, e.to_string()))
        };
        let v = v
            .trim()
            .parse::<f64>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        entries[slot].push((num(i)?, num(j)?, v));
    }
    let build = |e: &[(usize, usize, f64)]| -> Result<DenseMatrix> {
        let rows = e.iter().map(|t| t.0 + 1).max().unwrap_or(0);
        let cols = e.iter().map(|t| t.1 + 1).max().unwrap_or(0);
        if e.len() != rows * cols {
            return Err(parse_err(
                0,
                format!("expected {} entries, found {}", rows * cols, e.len()),
            ));
        }
        let mut m = DenseMatrix::zeros(rows, cols);
        for &(i, j, v) in e {
            m.set(i, j, v);
        }
        Ok(m)
    };
    Ok((build(&entries[0])?, build(&entries[1])?))
}
