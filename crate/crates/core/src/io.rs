//! The `EVD1` binary matrix format.
//!
//! Layout: the four magic bytes `EVD1`, a little-endian `u64` row count `n`,
//! then either the `n*n` column-major `f64` payload of a square matrix, or a
//! little-endian `u64` column count `m` followed by `n*m` values.

use std::fs;
use std::path::Path;

use crate::error::{EvdError, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"EVD1";

pub fn encode(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    if !m.is_square() {
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    }
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> Result<u64> {
    let chunk = bytes.get(at..at + 8).ok_or_else(|| EvdError::Format("truncated header".into()))?;
    Ok(u64::from_le_bytes(chunk.try_into().expect("8-byte slice")))
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(EvdError::Format("missing EVD1 magic".into()));
    }
    let n = read_u64(bytes, 4)? as usize;
    let rest = bytes.len() - 12;
    let (cols, start) = if n.checked_mul(n).and_then(|c| c.checked_mul(8)) == Some(rest) {
        (n, 12)
    } else {
        let m = read_u64(bytes, 12)? as usize;
        if m == 0 {
            return Err(EvdError::Format("zero column count".into()));
        }
        (m, 20)
    };
    let bytes_needed = n
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| EvdError::Format(format!("{n}x{cols} overflows")))?;
    let payload = &bytes[start..];
    if payload.len() != bytes_needed {
        return Err(EvdError::Format(format!(
            "{n}x{cols} matrix needs {bytes_needed} payload bytes, found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::from_col_major(n, cols, data)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    fs::write(path, encode(m))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    decode(&fs::read(path)?)
}

/// Writes a vector as an `n x 1` matrix.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    write_matrix(path, &Matrix::from_col_major(v.len(), 1, v.to_vec())?)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.cols() != 1 {
        return Err(EvdError::Format(format!("expected a column vector, found {}x{}", m.rows(), m.cols())));
    }
    Ok(m.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_and_rectangular_round_trip() {
        let sq = Matrix::from_fn(3, 3, |i, j| i as f64 - 0.5 * j as f64);
        let bytes = encode(&sq);
        assert_eq!(bytes.len(), 12 + 72);
        assert_eq!(decode(&bytes).unwrap(), sq);
        let rect = Matrix::from_fn(4, 1, |i, _| i as f64);
        let bytes = encode(&rect);
        assert_eq!(bytes.len(), 20 + 32);
        assert_eq!(decode(&bytes).unwrap(), rect);
    }

    #[test]
    fn one_by_one_is_square() {
        let m = Matrix::from_diag(&[7.0]);
        assert_eq!(encode(&m).len(), 20);
        assert_eq!(decode(&encode(&m)).unwrap(), m);
    }

    #[test]
    fn malformed_input_rejected() {
        assert!(decode(b"EVD2\0\0\0\0\0\0\0\0").is_err());
        let mut bytes = encode(&Matrix::identity(2));
        bytes.pop();
        assert!(decode(&bytes).is_err());
    }
}
