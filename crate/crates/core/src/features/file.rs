//! `AFFE` feature dumps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FeatureSequence;
use crate::error::{Error, Result};
use crate::nn::checkpoint::truncated;

pub const MAGIC: &[u8; 4] = b"AFFE";
pub const VERSION: u16 = 1;

pub fn write_features_to(mut w: impl Write, feats: &FeatureSequence) -> Result<()> {
    let rate = u16::try_from(feats.frame_rate()).map_err(|_| Error::InvalidConfig("frame rate exceeds u16".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&rate.to_le_bytes())?;
    w.write_all(&(feats.len() as u32).to_le_bytes())?;
    w.write_all(&(feats.dim() as u32).to_le_bytes())?;
    for v in feats.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_from(mut r: impl Read) -> Result<FeatureSequence> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(truncated)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("not a feature dump (bad magic)".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported feature dump version {version}")));
    }
    let rate = u16::from_le_bytes([head[6], head[7]]) as u32;
    let n = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let bytes = n as u64 * d as u64 * 4;
    let mut data = Vec::new();
    r.take(bytes).read_to_end(&mut data)?;
    if data.len() as u64 != bytes {
        return Err(Error::Format(format!("feature dump truncated: {} of {bytes} bytes", data.len())));
    }
    let values = data.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    FeatureSequence::new(values, d.max(1), rate).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_features(path: impl AsRef<Path>, feats: &FeatureSequence) -> Result<()> {
    write_features_to(BufWriter::new(File::create(path)?), feats)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    read_features_from(BufReader::new(File::open(path)?))
}
