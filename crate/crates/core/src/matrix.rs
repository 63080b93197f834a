//! Little-endian float32 matrix file.
//!
//! Layout: magic `EMB1` (4 bytes), `u32` version = 1, `u32` dim, `u64` count,
//! then `count * dim` float32 values in row-major order. Used for both
//! embedding tables and serialized classifier weights.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub dim: usize,
    pub rows: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn new(dim: usize, rows: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != dim * rows {
            return Err(Error::Matrix(format!(
                "{} values do not fill {rows} rows of dim {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, rows, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.rows as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses a whole matrix file. Rejects trailing bytes and non-finite
    /// values.
    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Matrix(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Matrix(format!(
                "truncated header: {} of {HEADER_LEN} bytes",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Matrix("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Matrix(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if dim == 0 {
            return Err(Error::Matrix("dim must be positive".into()));
        }
        let expected = (rows as u128) * (dim as u128) * 4 + HEADER_LEN as u128;
        if (bytes.len() as u128) < expected {
            return Err(Error::Matrix(format!(
                "truncated data: expected {expected} bytes, file ends at byte offset {}",
                bytes.len()
            )));
        }
        if (bytes.len() as u128) > expected {
            return Err(Error::Matrix(format!(
                "{} trailing bytes after byte offset {expected}",
                bytes.len() as u128 - expected
            )));
        }
        let rows = rows as usize;
        let mut data = Vec::with_capacity(rows * dim);
        for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Matrix(format!(
                    "non-finite value at row {}, column {}",
                    i / dim,
                    i % dim
                )));
            }
            data.push(v);
        }
        Ok(Self { dim, rows, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let m = Matrix::new(2, 1, vec![1.0, -2.5]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[0..4], b"EMB1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 28);
        assert_eq!(Matrix::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_bad_files() {
        let good = Matrix::new(2, 2, vec![0.0; 4]).unwrap().to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(Matrix::from_bytes(&bad).unwrap_err().to_string().contains("magic"));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(Matrix::from_bytes(&bad).is_err());

        let truncated = &good[..good.len() - 1];
        assert!(Matrix::from_bytes(truncated)
            .unwrap_err()
            .to_string()
            .contains("truncated"));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(Matrix::from_bytes(&trailing).is_err());

        let nan = Matrix::new(2, 1, vec![0.0, f32::NAN]).unwrap().to_bytes();
        assert!(Matrix::from_bytes(&nan).is_err());
    }
}
