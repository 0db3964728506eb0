//! MNW1 weight container.
//!
//! Layout (little-endian): magic `MNW1`, `u32` tensor count, then per
//! tensor a `u16` name length, the UTF-8 name, a `u8` rank, `u32` dims and
//! row-major `f32` data.

use std::path::Path;

use maskfuse_core::net::Tensor;
use maskfuse_core::NetWeights;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MNW1";

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a container into its tensors (unvalidated beyond the framing).
pub fn decode(bytes: &[u8]) -> std::result::Result<Vec<Tensor>, String> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let count = cur.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| "tensor name is not UTF-8".to_string())?
            .to_string();
        let rank = cur.take(1)?[0] as usize;
        let dims = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| format!("tensor `{name}`: dimensions overflow"))?;
        let raw = cur
            .take(n.checked_mul(4).ok_or("tensor too large")?)
            .map_err(|e| format!("tensor `{name}`: {e}"))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor { name, dims, data });
    }
    if cur.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
    }
    Ok(tensors)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let tensors = decode(&bytes).map_err(|r| Error::format(path, r))?;
    Ok(NetWeights::from_tensors(tensors)?)
}

pub fn save_weights(weights: &NetWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(&weights.to_tensors())).map_err(|e| Error::io(path, e))
}
