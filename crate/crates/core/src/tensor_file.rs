//! Dense feature-grid files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "MPTFGRID"
//! version      u32      1
//! config_hash  u64
//! channels     u32
//! height       u32
//! width        u32
//! names        channels x (u16 length, UTF-8 bytes)
//! values       channels*height*width x f32, channel-major, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, GridKind};

pub const GRID_MAGIC: &[u8; 8] = b"MPTFGRID";
pub const GRID_VERSION: u32 = 1;

pub fn encode_grid(grid: &FeatureGrid, config_hash: u64) -> Vec<u8> {
    let [c, h, w] = grid.shape();
    let mut out = Vec::with_capacity(40 + c * h * w * 4);
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.extend_from_slice(&config_hash.to_le_bytes());
    for d in [c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for name in grid.kind().channel_names() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for v in grid.values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a grid file, returning the grid and its config hash.
pub fn decode_grid(bytes: &[u8]) -> Result<(FeatureGrid, u64)> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != GRID_MAGIC {
        return Err(Error::Format("not a grid file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let hash = r.u64()?;
    let (c, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let names = (0..c)
        .map(|_| {
            let len = r.u16()? as usize;
            String::from_utf8(r.take(len)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let kind = GridKind::from_channel_names(&names)
        .ok_or_else(|| Error::Format(format!("unknown channel layout {names:?}")))?;
    let count = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format("grid shape overflows".into()))?;
    let raw = r.take(count * 4)?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok((FeatureGrid::from_values(kind, h, w, values)?, hash))
}

pub fn write_grid(path: impl AsRef<Path>, grid: &FeatureGrid, config_hash: u64) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_grid(grid, config_hash)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<(FeatureGrid, u64)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_garbage() {
        assert!(decode_grid(b"nope").is_err());
        let g = FeatureGrid::zeros(GridKind::Riv, 2, 3);
        let mut bytes = encode_grid(&g, 7);
        bytes.push(0);
        assert!(decode_grid(&bytes).is_err());
        bytes.truncate(bytes.len() - 5);
        assert!(decode_grid(&bytes).is_err());
    }

    #[test]
    fn header_fields() {
        let g = FeatureGrid::zeros(GridKind::NdtBev, 32, 1056);
        let bytes = encode_grid(&g, 0xdead_beef);
        assert_eq!(&bytes[..8], GRID_MAGIC);
        let (back, hash) = decode_grid(&bytes).unwrap();
        assert_eq!(hash, 0xdead_beef);
        assert_eq!(back.shape(), [4, 32, 1056]);
        assert_eq!(back.kind(), GridKind::NdtBev);
    }
}
