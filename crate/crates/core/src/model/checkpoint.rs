//! "CCNL" checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   b"CCNL"
//! version u32 (= 1)
//! repeated until EOF:
//!   name_len u32, name bytes (UTF-8)
//!   rank u32, dims u32 × rank
//!   payload f64 × product(dims)
//! ```
//!
//! Blocks hold every trainable tensor followed by the neck running
//! statistics. The architecture itself is rebuilt from a [`ModelConfig`];
//! loading checks that names and shapes match it exactly.

use std::fs;
use std::path::Path;

use super::{init_params, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numkit::{Parameters, Tensor};

pub const MAGIC: &[u8; 4] = b"CCNL";
pub const VERSION: u32 = 1;

pub fn encode_blocks(blocks: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in blocks {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!("checkpoint truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut blocks = Vec::new();
    while r.pos < bytes.len() {
        let n = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "name")?)
            .map_err(|_| Error::Format("block name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("block '{name}' shape overflows")))?;
        let payload = r.take(
            count.checked_mul(8).ok_or_else(|| Error::Format("payload too large".into()))?,
            "payload",
        )?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
        blocks.push((name, t));
    }
    Ok(blocks)
}

/// Trainable tensors then neck buffers, in visiting order.
pub fn model_blocks(params: &ModelParams) -> Vec<(String, Tensor)> {
    let mut blocks = Vec::new();
    params.visit("", &mut |n, t| blocks.push((n.to_string(), t.clone())));
    params.visit_buffers(&mut |n, t| blocks.push((n.to_string(), t.clone())));
    blocks
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode_blocks(&model_blocks(params))).map_err(|e| Error::io(path, e))
}

/// Rebuilds a model for `config` from decoded blocks.
pub fn params_from_blocks(config: &ModelConfig, blocks: &[(String, Tensor)]) -> Result<ModelParams> {
    let head = blocks
        .iter()
        .find(|(n, _)| n == "branch0.head.weight")
        .ok_or_else(|| Error::Format("checkpoint has no classifier head".into()))?;
    let classes = head.1.rows();
    let mut params = init_params(0, config, classes)?;
    let expected = model_blocks(&params);
    if expected.len() != blocks.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} blocks, model config expects {}",
            blocks.len(),
            expected.len()
        )));
    }
    for ((en, et), (gn, gt)) in expected.iter().zip(blocks) {
        if en != gn || et.shape() != gt.shape() {
            return Err(Error::Format(format!(
                "checkpoint block '{gn}' {:?} does not match expected '{en}' {:?}",
                gt.shape(),
                et.shape()
            )));
        }
    }
    let mut it = blocks.iter();
    params.visit_mut("", &mut |_, t| *t = it.next().expect("counted").1.clone());
    params.visit_buffers_mut(&mut |_, t| *t = it.next().expect("counted").1.clone());
    Ok(params)
}

pub fn load_checkpoint(config: &ModelConfig, path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_blocks(config, &decode_blocks(&bytes)?)
}
