//! Matrix file I/O.
//!
//! The native format is bit-exact for golden tests: the ASCII header
//! `SPNM1\n` followed by `n m\n` and then `n*m` row-major IEEE-754
//! little-endian doubles. A CSV fallback (one row per line, comma
//! separated) covers interchange; files named `*.csv` or lacking the magic
//! are parsed as CSV with line/column diagnostics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

pub const MAGIC: &[u8; 6] = b"SPNM1\n";

/// Write in the native binary format.
pub fn write_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(format!("{} {}\n", a.nrows(), a.ncols()).as_bytes())?;
    for row in a.rows() {
        for &v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write CSV, one matrix row per line. Floats are formatted with ryu
/// (shortest round-trip), so re-reading reproduces the exact values.
pub fn write_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn format_err(path: &Path, msg: String) -> Error {
    Error::FileFormat { path: path.display().to_string(), msg }
}

/// Read the native binary format.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|e| format_err(path, format!("short header: {e}")))?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic, expected SPNM1".to_string()));
    }
    let mut dims_line = String::new();
    r.read_line(&mut dims_line)?;
    let mut parts = dims_line.split_whitespace();
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, format!("bad dimension line {dims_line:?}")))?;
    let m: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, format!("bad dimension line {dims_line:?}")))?;
    if parts.next().is_some() {
        return Err(format_err(path, format!("trailing tokens in dimension line {dims_line:?}")));
    }
    let mut buf = vec![0u8; n * m * 8];
    r.read_exact(&mut buf).map_err(|e| {
        format_err(path, format!("expected {} payload bytes: {e}", n * m * 8))
    })?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err(path, "trailing bytes after payload".to_string()));
    }
    let data: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((n, m), data)
        .map_err(|e| format_err(path, format!("shape error: {e}")))
}

/// Read CSV with per-cell diagnostics.
pub fn read_csv(path: &Path) -> Result<Array2<f64>> {
    let r = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                format_err(
                    path,
                    format!("line {}, column {}: bad number {:?}", lineno + 1, col + 1, cell.trim()),
                )
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format_err(
                    path,
                    format!(
                        "line {}: {} columns, expected {}",
                        lineno + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err(path, "empty matrix".to_string()));
    }
    let n = rows.len();
    let m = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, m), flat).map_err(|e| format_err(path, format!("shape error: {e}")))
}

/// Read either format: sniff the magic, fall back to CSV.
pub fn read_auto(path: &Path) -> Result<Array2<f64>> {
    let mut f = File::open(path)?;
    let mut magic = [0u8; 6];
    let got = f.read(&mut magic)?;
    drop(f);
    if got == 6 && &magic == MAGIC {
        read_matrix(path)
    } else {
        read_csv(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.spnm");
        let a = array![[1.5, -2.25e-300, f64::MIN_POSITIVE], [0.0, 3.7, 1e300]];
        write_matrix(&p, &a).unwrap();
        let b = read_matrix(&p).unwrap();
        assert_eq!(a, b);
        let c = read_auto(&p).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let a = array![[1.0, 2.0], [3.25, -4.5]];
        write_csv(&p, &a).unwrap();
        assert_eq!(read_auto(&p).unwrap(), a);
    }

    #[test]
    fn corrupt_csv_reports_position() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "1.0,2.0\n3.0,oops\n").unwrap();
        match read_auto(&p) {
            Err(Error::FileFormat { msg, .. }) => {
                assert!(msg.contains("line 2"), "{msg}");
                assert!(msg.contains("column 2"), "{msg}");
            }
            other => panic!("expected FileFormat error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_reports_shortfall() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("short.spnm");
        std::fs::write(&p, b"SPNM1\n2 2\n\x00\x00").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::FileFormat { .. })));
    }
}
