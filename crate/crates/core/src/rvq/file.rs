//! `AFCB` codebook files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::CodebookSet;
use crate::error::{Error, Result};
use crate::nn::checkpoint::truncated;

pub const MAGIC: &[u8; 4] = b"AFCB";
pub const VERSION: u16 = 1;

pub fn write_codebooks_to(mut w: impl Write, books: &CodebookSet) -> Result<()> {
    let levels = u16::try_from(books.levels()).map_err(|_| Error::InvalidConfig("too many levels for AFCB".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&levels.to_le_bytes())?;
    w.write_all(&(books.entries() as u32).to_le_bytes())?;
    w.write_all(&(books.dim() as u32).to_le_bytes())?;
    for v in books.codewords() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_codebooks_from(mut r: impl Read) -> Result<CodebookSet> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(truncated)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("not a codebook file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported codebook version {version}")));
    }
    let levels = u16::from_le_bytes([head[6], head[7]]) as usize;
    let entries = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let count = levels
        .checked_mul(entries)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| Error::Format("codebook size overflows".into()))?;
    let mut bytes = Vec::new();
    r.take(count as u64 * 4).read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(Error::Format(format!("codebook truncated: {} of {} bytes", bytes.len(), count * 4)));
    }
    let words = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    CodebookSet::new(levels, entries, dim, words).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_codebooks(path: impl AsRef<Path>, books: &CodebookSet) -> Result<()> {
    write_codebooks_to(BufWriter::new(File::create(path)?), books)
}

pub fn read_codebooks(path: impl AsRef<Path>) -> Result<CodebookSet> {
    read_codebooks_from(BufReader::new(File::open(path)?))
}
