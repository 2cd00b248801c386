//! `T × D` frame-level feature matrices and their on-disk format.
//!
//! ```text
//! "MPFT" | version: u32 = 1 | T: u32 | D: u32 | T*D f32, little-endian, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"MPFT";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Frame-level feature sequence. Values are `f32`, matching the file format;
/// [`FeatureMatrix::to_tensor`] widens them exactly to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "feature matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::invalid(format!(
                "{rows}x{cols} feature matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FeatureMatrix::new"));
        }
        Ok(Self { rows, cols, values })
    }

    /// Narrows `f64` values to `f32`.
    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| v as f32).collect())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::shape("FeatureMatrix::from_tensor", t.shape(), &[0, 0]));
        }
        Self::from_f64(t.rows(), t.cols(), t.data())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.cols..(t + 1) * self.cols]
    }

    pub fn get(&self, t: usize, d: usize) -> f32 {
        self.values[t * self.cols + d]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            vec![self.rows, self.cols],
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    /// Columns `start..start + len`.
    pub fn columns(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.cols {
            return Err(Error::invalid(format!(
                "column range {start}..{} out of bounds for {} columns",
                start + len,
                self.cols
            )));
        }
        let values = (0..self.rows)
            .flat_map(|t| self.row(t)[start..start + len].iter().copied())
            .collect();
        Self::new(self.rows, len, values)
    }

    /// Picks rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let values = idx
            .iter()
            .flat_map(|&t| self.row(t).iter().copied())
            .collect();
        Self::new(idx.len(), self.cols, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        buf.extend_from_slice(FEATURE_MAGIC);
        buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    /// Parses the file format; `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(path, "truncated feature header"));
        }
        if &bytes[..4] != FEATURE_MAGIC {
            return Err(Error::format(
                path,
                format!(
                    "bad feature-file magic {:?} (expected \"MPFT\")",
                    String::from_utf8_lossy(&bytes[..4])
                ),
            ));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != FEATURE_VERSION {
            return Err(Error::format(path, format!("unsupported feature-file version {version}")));
        }
        let (rows, cols) = (word(8) as usize, word(12) as usize);
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(path, "feature dimensions overflow"))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::format(
                path,
                format!(
                    "payload is {} bytes, {rows}x{cols} needs {expected}",
                    payload.len()
                ),
            ));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows, cols, values).map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn write_feature_file(m: &FeatureMatrix, path: &Path) -> Result<()> {
    fs::write(path, m.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_bytes(&bytes, path)
}
