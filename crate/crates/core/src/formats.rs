//! File helpers and the shared dense-matrix encodings.
//!
//! Text matrices are a `rows cols` header followed by one `label v1 .. vcols`
//! line per row with 9 decimal digits. Binary matrices are `PREX`, a version
//! byte, `rows` and `cols` as little-endian u64, then row-major little-endian
//! f64 values.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"PREX";
pub const BINARY_VERSION: u8 = 1;
const BINARY_HEADER_LEN: usize = 4 + 1 + 8 + 8;

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    write_bytes(path, contents.as_bytes())
}

pub fn write_bytes(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Appends one `label v1 .. vn` line.
pub fn push_row(out: &mut String, label: &str, row: impl IntoIterator<Item = f64>) {
    out.push_str(label);
    for v in row {
        let _ = write!(out, " {v:.9}");
    }
    out.push('\n');
}

pub fn parse_row(line: &str, cols: usize, source_name: &str, lineno: usize) -> Result<(String, Vec<f64>)> {
    let mut fields = line.split(' ');
    let label = fields
        .next()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::format(source_name, lineno, "missing row label"))?
        .to_string();
    let values: Vec<f64> = fields
        .map(|f| f.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(source_name, lineno, "non-numeric matrix entry"))?;
    if values.len() != cols {
        return Err(Error::format(
            source_name,
            lineno,
            format!("expected {cols} values, found {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(source_name, lineno, "non-finite matrix entry"));
    }
    Ok((label, values))
}

/// Text encoding with row labels `0..rows`.
pub fn matrix_to_text(m: &Array2<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for (i, row) in m.rows().into_iter().enumerate() {
        push_row(&mut out, &i.to_string(), row.iter().copied());
    }
    out
}

pub fn matrix_from_text(text: &str, source_name: &str) -> Result<Array2<f64>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(source_name, 1, "empty matrix file"))?;
    let dims: Vec<usize> = header
        .split(' ')
        .map(|f| f.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(source_name, 1, "expected header `rows cols`"))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::format(source_name, 1, "expected header `rows cols`"));
    };
    let mut m = Array2::zeros((rows, cols));
    let mut seen = vec![false; rows];
    let mut n_lines = 0;
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        if line.is_empty() {
            continue;
        }
        let (label, values) = parse_row(line, cols, source_name, lineno)?;
        let id: usize = label
            .parse()
            .ok()
            .filter(|&id| id < rows)
            .ok_or_else(|| Error::format(source_name, lineno, format!("row id {label:?} out of range")))?;
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::format(source_name, lineno, format!("duplicate row id {id}")));
        }
        for (c, v) in values.into_iter().enumerate() {
            m[[id, c]] = v;
        }
        n_lines += 1;
    }
    if n_lines != rows {
        return Err(Error::format(
            source_name,
            text.lines().count(),
            format!("expected {rows} rows, found {n_lines}"),
        ));
    }
    Ok(m)
}

pub fn matrix_to_binary(m: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + 8 * m.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.push(BINARY_VERSION);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one binary matrix from the front of `bytes`, returning it and the
/// number of bytes consumed.
pub fn matrix_from_binary(bytes: &[u8], source_name: &str) -> Result<(Array2<f64>, usize)> {
    let fail = |msg: &str| Error::format(source_name, 0, msg.to_string());
    if bytes.len() < BINARY_HEADER_LEN || &bytes[..4] != BINARY_MAGIC {
        return Err(fail("missing PREX magic"));
    }
    if bytes[4] != BINARY_VERSION {
        return Err(fail(&format!("unsupported PREX version {}", bytes[4])));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let rows = usize::try_from(read_u64(5)).map_err(|_| fail("row count overflows"))?;
    let cols = usize::try_from(read_u64(13)).map_err(|_| fail("column count overflows"))?;
    let n = rows.checked_mul(cols).ok_or_else(|| fail("matrix size overflows"))?;
    let end = n
        .checked_mul(8)
        .and_then(|b| b.checked_add(BINARY_HEADER_LEN))
        .ok_or_else(|| fail("matrix size overflows"))?;
    if bytes.len() < end {
        return Err(fail("truncated PREX payload"));
    }
    let values: Vec<f64> = bytes[BINARY_HEADER_LEN..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let m = Array2::from_shape_vec((rows, cols), values).map_err(|_| fail("bad matrix shape"))?;
    Ok((m, end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let m = Array2::from_shape_simple_fn((rows, cols), || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(s >> 2) - 1.0
            });
            let bytes = matrix_to_binary(&m);
            let (back, used) = matrix_from_binary(&bytes, "m").unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(matrix_to_binary(&back), bytes);
        }

        #[test]
        fn text_rewrite_is_stable(rows in 0usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let m = Array2::from_shape_simple_fn((rows, cols), || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 10.0
            });
            let text = matrix_to_text(&m);
            let back = matrix_from_text(&text, "m").unwrap();
            prop_assert_eq!(matrix_to_text(&back), text);
        }
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matrix_from_binary(b"NOPE\x01", "m").is_err());
        assert!(matrix_from_text("2 2\n0 1.0 2.0\n", "m").is_err());
        assert!(matrix_from_text("1 2\n0 1.0\n", "m").is_err());
        assert!(matrix_from_text("1 1\n0 NaN\n", "m").is_err());
    }
}
