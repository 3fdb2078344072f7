//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! b"NTCK" | u32 version (1) | u64 arch fingerprint | u32 tensor count
//! per tensor: u32 ndim | ndim × u64 dim | Π dims × f64
//! ```
//! Tensors appear in [`ModelWeights::tensors`] order.

use std::path::Path;

use crate::nn::{LayerParams, ModelArch, ModelWeights, Tensor};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NTCK";
const VERSION: u32 = 1;

pub fn encode_checkpoint(arch: &ModelArch, weights: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + weights.num_parameters() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&arch.fingerprint().to_le_bytes());
    out.extend_from_slice(&(weights.params.len() as u32 * 2).to_le_bytes());
    for t in weights.tensors() {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
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
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Decodes and validates a checkpoint against `arch`. `origin` names the
/// source in error messages.
pub fn decode_checkpoint(arch: &ModelArch, bytes: &[u8], origin: &Path) -> Result<ModelWeights> {
    let bad = |m: &str| Error::format(origin, m.to_string());
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    if c.u32() != Some(VERSION) {
        return Err(bad("unsupported checkpoint version"));
    }
    let fp = c.u64().ok_or_else(|| bad("truncated header"))?;
    if fp != arch.fingerprint() {
        return Err(bad("checkpoint was written for a different architecture"));
    }
    let count = c.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = c.u32().ok_or_else(|| bad("truncated tensor header"))? as usize;
        let shape = (0..ndim)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("truncated tensor header"))?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or_else(|| bad("tensor too large"))?).ok_or_else(|| bad("truncated tensor data"))?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?);
    }
    if c.pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    if count % 2 != 0 {
        return Err(bad("odd tensor count"));
    }
    let mut it = tensors.into_iter();
    let mut params = Vec::with_capacity(count / 2);
    while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
        params.push(LayerParams { weight, bias });
    }
    let w = ModelWeights { params };
    w.check(arch).map_err(|e| bad(&e.to_string()))?;
    Ok(w)
}

pub fn write_checkpoint(path: &Path, arch: &ModelArch, weights: &ModelWeights) -> Result<()> {
    super::write_atomic(path, &encode_checkpoint(arch, weights))
}

pub fn read_checkpoint(path: &Path, arch: &ModelArch) -> Result<ModelWeights> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(arch, &bytes, path)
}
