//! "CCNF" embedding blocks.
//!
//! ```text
//! magic   b"CCNF"
//! version u32 (= 1)
//! count   u32
//! dim     u32
//! payload f32 × count·dim, row-major, little-endian
//! ```
//!
//! Values are stored as f32; reading widens them back to f64 exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CCNF";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_embeddings(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::shape("embedding rows have differing dimensions"));
    }
    let mut out = Vec::with_capacity(HEADER + 4 * rows.len() * dim);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in rows.iter().flatten() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    if bytes.len() < HEADER {
        return Err(Error::Format("embedding file truncated in header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad embedding magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let version = word(4);
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported embedding version {version}")));
    }
    let (count, dim) = (word(8), word(12));
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("embedding header overflows".into()))?;
    let payload = &bytes[HEADER..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "header declares {count}×{dim} values ({expected} bytes), payload has {} bytes",
            payload.len()
        )));
    }
    if dim == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    Ok(payload
        .chunks_exact(4 * dim)
        .map(|row| {
            row.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        })
        .collect())
}

pub fn write_embeddings(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    fs::write(path, encode_embeddings(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}
