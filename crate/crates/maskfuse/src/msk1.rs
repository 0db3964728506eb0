//! MSK1 mask files: magic `MSK1`, `u32` frequency bins, `u32` frames, then
//! frequency-major little-endian `f32` values.

use std::path::Path;

use maskfuse_core::Mask;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MSK1";

pub fn encode(m: &Mask) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * m.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.freq_bins() as u32).to_le_bytes());
    out.extend_from_slice(&(m.frames() as u32).to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Mask, String> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    if bytes.len() < 12 {
        return Err("truncated header".into());
    }
    let f = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    let expected = f.checked_mul(t).and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(format!("dims {f}x{t} do not match a payload of {} bytes", payload.len()));
    }
    let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Mask::new(values, f, t).map_err(|e| e.to_string())
}

pub fn write_mask(m: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(m)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|r| Error::format(path, r))
}
