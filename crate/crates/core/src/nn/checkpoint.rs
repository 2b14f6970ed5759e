//! Flat named-tensor container.
//!
//! Layout (little-endian): magic `AFCK`, version `u16`, manifest length `u32`,
//! a JSON manifest `{"meta": …, "tensors": [{"name", "shape"}, …]}`, then every
//! tensor's `f32` data in manifest order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

pub const MAGIC: &[u8; 4] = b"AFCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn new<T: Real>(meta: serde_json::Value, params: &ParamStore<T>) -> Self {
        Self {
            meta,
            params: params.cast(),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let manifest = Manifest {
            meta: self.meta.clone(),
            tensors: self
                .params
                .iter()
                .map(|(name, t)| Entry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in self.params.iter() {
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let mut two = [0u8; 2];
        r.read_exact(&mut two).map_err(truncated)?;
        let version = u16::from_le_bytes(two);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut four = [0u8; 4];
        r.read_exact(&mut four).map_err(truncated)?;
        let mut json = vec![0u8; u32::from_le_bytes(four) as usize];
        r.read_exact(&mut json).map_err(truncated)?;
        let manifest: Manifest =
            serde_json::from_slice(&json).map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
        let mut params = ParamStore::new();
        for entry in manifest.tensors {
            let n: usize = entry.shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes).map_err(truncated)?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            params.add(entry.name, Tensor::new(entry.shape, data)?);
        }
        Ok(Self {
            meta: manifest.meta,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

pub(crate) fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_values() {
        let mut store = ParamStore::<f32>::new();
        store.add("a.weight", Tensor::from_fn(&[2, 3], |i| i as f32 * 0.25));
        store.add("b", Tensor::full(&[4], -1.5));
        let ck = Checkpoint::new(serde_json::json!({"kind": "test", "levels": 8}), &store);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.meta["levels"], 8);
        let names: Vec<_> = back.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        let orig: Vec<_> = store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        assert_eq!(names, orig);
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        assert!(matches!(Checkpoint::read_from(&b"NOPE\x01\x00"[..]), Err(Error::Format(_))));
        let mut store = ParamStore::<f32>::new();
        store.add("x", Tensor::zeros(&[8]));
        let mut buf = Vec::new();
        Checkpoint::new(serde_json::Value::Null, &store).write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(Checkpoint::read_from(buf.as_slice()), Err(Error::Format(_))));
    }
}
