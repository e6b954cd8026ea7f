//! Weight checkpoints.
//!
//! ```text
//! magic        8 bytes  "MPTFCKPT"
//! version      u32      1
//! arch_hash    u64      NetConfig::architecture_hash
//! count        u32
//! per tensor:  u16 name length, UTF-8 name, u32 rank, rank x u32 dims,
//!              f64 values (little-endian)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::NetConfig;
use super::weights::NetworkWeights;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::tensor_file::Reader;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MPTFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(cfg: &NetConfig, weights: &NetworkWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&cfg.architecture_hash().to_le_bytes());
    out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
    for (name, t) in weights.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
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

/// Decodes a checkpoint written for an architecture equal to `cfg`.
pub fn decode_checkpoint(cfg: &NetConfig, bytes: &[u8]) -> Result<NetworkWeights> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let hash = r.u64()?;
    if hash != cfg.architecture_hash() {
        return Err(Error::Config(format!(
            "checkpoint was trained for architecture {hash:016x}, config describes {:016x}",
            cfg.architecture_hash()
        )));
    }
    let count = r.u32()? as usize;
    let mut params = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("{name}: rank {rank} is implausible")));
        }
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        if n.checked_mul(8).is_none_or(|b| b > r.remaining()) {
            return Err(Error::Format(format!("{name}: truncated values")));
        }
        let data = r
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(name, Tensor::new(&shape, data)?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    NetworkWeights::from_params(cfg, params)
}

pub fn save_checkpoint(path: &Path, cfg: &NetConfig, weights: &NetworkWeights) -> Result<()> {
    fs::write(path, encode_checkpoint(cfg, weights)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, cfg: &NetConfig) -> Result<NetworkWeights> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(cfg, &bytes)
}
