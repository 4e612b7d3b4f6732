//! `CGT1` matrix files.
//!
//! Layout: 4-byte magic `CGT1`, one kind byte (0 = unembedding, 1 = embedding
//! set), rows and cols as little-endian `u32`, then `rows * cols`
//! little-endian `f32` values in row-major order. Values are widened to
//! `f64` once on load and narrowed once on save.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CGT1";
pub const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Unembedding,
    Embedding,
}

impl MatrixKind {
    pub fn tag(self) -> u8 {
        match self {
            MatrixKind::Unembedding => 0,
            MatrixKind::Embedding => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(MatrixKind::Unembedding),
            1 => Ok(MatrixKind::Embedding),
            other => Err(Error::UnknownKind(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Unembedding => "unembedding",
            MatrixKind::Embedding => "embedding",
        }
    }
}

/// A decoded matrix file: its kind tag and the widened values.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub kind: MatrixKind,
    pub data: DMatrix<f64>,
}

/// Parses the fixed 13-byte header, returning kind and shape.
pub fn decode_header(bytes: &[u8]) -> Result<(MatrixKind, usize, usize)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::InvalidShape(format!(
            "header truncated to {} bytes",
            bytes.len()
        )));
    }
    let kind = MatrixKind::from_tag(bytes[4])?;
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    Ok((kind, rows, cols))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<MatrixFile> {
    let (kind, rows, cols) = decode_header(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidShape(format!("{rows}x{cols} overflows")))?;
    if payload.len() != expected {
        return Err(Error::ShapeMismatch {
            rows,
            cols,
            expected,
            actual: payload.len(),
        });
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut data = DMatrix::zeros(rows, cols);
    for row in 0..rows {
        for col in 0..cols {
            let v = values.next().unwrap();
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
            data[(row, col)] = f64::from(v);
        }
    }
    Ok(MatrixFile { kind, data })
}

pub fn encode_matrix(kind: MatrixKind, data: &DMatrix<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = data.shape();
    let rows32 =
        u32::try_from(rows).map_err(|_| Error::InvalidShape(format!("{rows} rows exceed u32")))?;
    let cols32 =
        u32::try_from(cols).map_err(|_| Error::InvalidShape(format!("{cols} cols exceed u32")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(MAGIC);
    out.push(kind.tag());
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    for row in 0..rows {
        for col in 0..cols {
            let v = data[(row, col)] as f32;
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<MatrixFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

/// Writes a matrix file. Entries that overflow `f32` are rejected.
pub fn save_matrix(path: impl AsRef<Path>, kind: MatrixKind, data: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(kind, data)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}
