//! Binary checkpoint container.
//!
//! All integers are little-endian `u32`.
//!
//! ```text
//! magic      4 bytes  "PSCK"
//! version    u32      1
//! meta_len   u32      byte length of the metadata
//! meta       bytes    UTF-8 JSON describing how to rebuild the model
//! count      u32      number of tensors
//! count times:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, dims u32 x ndim
//!   data     f32 little-endian x product(dims)
//! ```

use std::fs;
use std::path::Path;

use crate::autograd::params::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PSCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_store(meta: String, store: &ParamStore) -> Self {
        let tensors = store
            .iter()
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.data.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Self { meta, tensors }
    }

    /// Copy every tensor into the parameter of the same name. The store must
    /// hold exactly the checkpoint's parameter set.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for t in &self.tensors {
            store.set_data(&t.name, &t.shape, t.data.iter().map(|&v| v as f64).collect())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, VERSION);
        push_u32(&mut out, self.meta.len() as u32);
        out.extend_from_slice(self.meta.as_bytes());
        push_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            push_u32(&mut out, t.name.len() as u32);
            out.extend_from_slice(t.name.as_bytes());
            push_u32(&mut out, t.shape.len() as u32);
            for &d in &t.shape {
                push_u32(&mut out, d as u32);
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta = r.string(meta_len)?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.string(name_len)?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
