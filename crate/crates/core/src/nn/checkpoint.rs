//! Named-tensor checkpoint archive.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic        8 bytes   "SEDCKPT1"
//! meta_len     u32       length of the metadata block
//! meta         bytes     UTF-8 text (free-form; the model stores TOML)
//! count        u32       number of tensors
//! per tensor:
//!   name_len   u32
//!   name       bytes     UTF-8
//!   trainable  u8        0 or 1
//!   ndim       u32
//!   dims       u64 × ndim
//!   values     f64 × prod(dims)
//! ```
//!
//! Tensors appear in [`ParamSet`] iteration order; values are raw IEEE-754
//! bits so the round trip is exact.

use std::path::Path;

use super::{ParamSet, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEDCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub params: ParamSet,
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * checkpoint.params.numel());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(checkpoint.metadata.len() as u32).to_le_bytes());
    buf.extend_from_slice(checkpoint.metadata.as_bytes());
    buf.extend_from_slice(&(checkpoint.params.len() as u32).to_le_bytes());
    for (name, param) in checkpoint.params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(param.trainable as u8);
        let shape = param.tensor.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &param.tensor.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Data(format!("{}: truncated checkpoint", self.path.display())));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Data(format!("{}: invalid UTF-8 in checkpoint", self.path.display())))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, path };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Data(format!("{}: not a checkpoint file", path.display())));
    }
    let meta_len = r.u32()? as usize;
    let metadata = r.string(meta_len)?;
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = r.string(name_len)?;
        let trainable = r.take(1)?[0] != 0;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = r
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(name, Tensor::new(&shape, data)?, trainable)?;
    }
    if !r.bytes.is_empty() {
        return Err(Error::Data(format!("{}: trailing bytes after checkpoint", path.display())));
    }
    Ok(Checkpoint { metadata, params })
}
