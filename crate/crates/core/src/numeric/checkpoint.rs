//! Binary checkpoint format.
//!
//! All integers are little-endian.
//!
//! ```text
//! bytes   field
//! 8       magic "MIRECKPT"
//! 4       format version (u32), currently 1
//! 8       metadata length M (u64)
//! M       metadata, UTF-8 JSON
//! 4       block count N (u32)
//! N ×     block:
//!   4       name length L (u32)
//!   L       name, UTF-8
//!   1       rank r, 1 or 2
//!   8·r     dimensions (u64 each); rank-1 blocks load as 1 × n
//!   8·Πd    values, f64, row-major
//! 32      SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::param::ParamBlock;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MIRECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub blocks: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn new(metadata: serde_json::Value) -> Self {
        Checkpoint {
            metadata,
            blocks: Vec::new(),
        }
    }

    pub fn push_blocks<'a>(&mut self, prefix: &str, blocks: impl IntoIterator<Item = &'a ParamBlock>) {
        for b in blocks {
            self.blocks.push((format!("{prefix}{}", b.name), b.values.clone()));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Copies stored values into `blocks`, matching by `prefix + name`.
    /// Every target must be present with the same shape.
    pub fn restore_into<'a>(&self, prefix: &str, blocks: impl IntoIterator<Item = &'a mut ParamBlock>) -> Result<()> {
        for b in blocks {
            let key = format!("{prefix}{}", b.name);
            let stored = self
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("block `{key}` missing from checkpoint")))?;
            if stored.dim() != b.values.dim() {
                return Err(Error::shape(
                    format!("checkpoint block `{key}`"),
                    format!("{:?}", b.values.dim()),
                    format!("{:?}", stored.dim()),
                ));
            }
            b.values.assign(stored);
            b.zero_grad();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.metadata)?;
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for (name, values) in &self.blocks {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(2);
            let (r, c) = values.dim();
            out.extend_from_slice(&(r as u64).to_le_bytes());
            out.extend_from_slice(&(c as u64).to_le_bytes());
            for v in values.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let meta_len = r.u64()? as usize;
        let metadata = serde_json::from_slice(r.take(meta_len)?)?;
        let n = r.u32()?;
        let mut blocks = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
            let (rows, cols) = match r.take(1)?[0] {
                1 => (1, r.u64()? as usize),
                2 => (r.u64()? as usize, r.u64()? as usize),
                k => return Err(Error::Checkpoint(format!("block `{name}` has unsupported rank {k}"))),
            };
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint(format!("block `{name}` dimensions overflow")))?;
            let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let arr = Array2::from_shape_vec((rows, cols), values).expect("length checked");
            blocks.push((name, arr));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes before checksum".into()));
        }
        Ok(Checkpoint { metadata, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
