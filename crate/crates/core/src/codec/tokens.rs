//! `AFRQ` token files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::checkpoint::truncated;
use crate::rvq::RvqCode;

pub const MAGIC: &[u8; 4] = b"AFRQ";
pub const VERSION: u16 = 1;

/// Codes of one utterance with the settings needed to validate them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenFile {
    pub sample_rate: u32,
    pub levels: usize,
    pub entries: usize,
    pub codes: Vec<RvqCode>,
}

pub fn write_tokens_to(mut w: impl Write, tokens: &TokenFile) -> Result<()> {
    let levels = u16::try_from(tokens.levels).map_err(|_| Error::InvalidConfig("too many levels for AFRQ".into()))?;
    if tokens.entries > u16::MAX as usize + 1 {
        return Err(Error::InvalidConfig("AFRQ indices are u16".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&tokens.sample_rate.to_le_bytes())?;
    w.write_all(&levels.to_le_bytes())?;
    w.write_all(&(tokens.entries as u32).to_le_bytes())?;
    w.write_all(&(tokens.codes.len() as u64).to_le_bytes())?;
    for code in &tokens.codes {
        if code.levels() != tokens.levels {
            return Err(Error::CorruptCode(format!("code with {} levels in a {}-level file", code.levels(), tokens.levels)));
        }
        for &i in &code.indices {
            if i >= tokens.entries {
                return Err(Error::CorruptCode(format!("index {i} ≥ K={}", tokens.entries)));
            }
            w.write_all(&(i as u16).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tokens_from(mut r: impl Read) -> Result<TokenFile> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head).map_err(truncated)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("not a token file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported token file version {version}")));
    }
    let sample_rate = u32::from_le_bytes(head[6..10].try_into().unwrap());
    let levels = u16::from_le_bytes([head[10], head[11]]) as usize;
    let entries = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let frames = u64::from_le_bytes(head[16..24].try_into().unwrap());
    let bytes = frames
        .checked_mul(levels as u64 * 2)
        .ok_or_else(|| Error::Format("token count overflows".into()))?;
    let mut data = Vec::new();
    r.take(bytes).read_to_end(&mut data)?;
    if data.len() as u64 != bytes {
        return Err(Error::Format(format!("token file truncated: {} of {bytes} bytes", data.len())));
    }
    let indices: Vec<usize> = data.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as usize).collect();
    if let Some(bad) = indices.iter().find(|&&i| i >= entries) {
        return Err(Error::CorruptCode(format!("index {bad} ≥ K={entries}")));
    }
    let codes = if levels == 0 {
        Vec::new()
    } else {
        indices.chunks(levels).map(|c| RvqCode::new(c.to_vec())).collect()
    };
    Ok(TokenFile {
        sample_rate,
        levels,
        entries,
        codes,
    })
}

pub fn write_tokens(path: impl AsRef<Path>, tokens: &TokenFile) -> Result<()> {
    write_tokens_to(BufWriter::new(File::create(path)?), tokens)
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<TokenFile> {
    read_tokens_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_layout_and_errors() {
        let t = TokenFile {
            sample_rate: 44_100,
            levels: 3,
            entries: 1024,
            codes: vec![RvqCode::new(vec![1, 1023, 0]), RvqCode::new(vec![5, 6, 7])],
        };
        let mut buf = Vec::new();
        write_tokens_to(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 24 + 2 * 3 * 2);
        assert_eq!(&buf[24..26], &1u16.to_le_bytes());
        assert_eq!(read_tokens_from(&buf[..]).unwrap(), t);
        assert!(matches!(read_tokens_from(&buf[..buf.len() - 2]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[3] = b'E';
        assert!(matches!(read_tokens_from(&bad[..]), Err(Error::Format(_))));
        let mut out_of_range = buf.clone();
        out_of_range[12..16].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(read_tokens_from(&out_of_range[..]), Err(Error::CorruptCode(_))));
    }
}
