//! Timestamped token emissions and their line-oriented log.
//!
//! One record per line: `kind index timestamp_ns [synth_ns]`, where `kind` is
//! `text` or `audio`. Lines starting with `#` and blank lines are skipped.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Text,
    Audio,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Text => "text",
            TokenKind::Audio => "audio",
        })
    }
}

impl FromStr for TokenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(TokenKind::Text),
            "audio" => Ok(TokenKind::Audio),
            other => Err(Error::Format(format!("unknown event kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub kind: TokenKind,
    /// Position of the token in its stream.
    pub index: usize,
    pub timestamp_ns: u64,
    /// Waveform synthesis time included in an audio event.
    pub synth_ns: Option<u64>,
}

impl fmt::Display for TokenEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind, self.index, self.timestamp_ns)?;
        if let Some(s) = self.synth_ns {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

impl FromStr for TokenEvent {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::Format(format!("expected 3 or 4 fields, got {:?}", line)));
        }
        let num = |s: &str| -> Result<u64> { s.parse().map_err(|_| Error::Format(format!("bad number {s:?}"))) };
        Ok(Self {
            kind: fields[0].parse()?,
            index: num(fields[1])? as usize,
            timestamp_ns: num(fields[2])?,
            synth_ns: fields.get(3).map(|s| num(s)).transpose()?,
        })
    }
}

pub fn write_event_log_to(mut w: impl Write, events: &[TokenEvent]) -> Result<()> {
    for e in events {
        writeln!(w, "{e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_event_log_from(r: impl Read) -> Result<Vec<TokenEvent>> {
    let mut events = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        events.push(
            trimmed
                .parse()
                .map_err(|e| Error::Format(format!("event log line {}: {e}", n + 1)))?,
        );
    }
    Ok(events)
}

pub fn write_event_log(path: impl AsRef<Path>, events: &[TokenEvent]) -> Result<()> {
    write_event_log_to(std::io::BufWriter::new(std::fs::File::create(path)?), events)
}

pub fn read_event_log(path: impl AsRef<Path>) -> Result<Vec<TokenEvent>> {
    read_event_log_from(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let events = vec![
            TokenEvent {
                kind: TokenKind::Text,
                index: 0,
                timestamp_ns: 5,
                synth_ns: None,
            },
            TokenEvent {
                kind: TokenKind::Audio,
                index: 0,
                timestamp_ns: 150_000_000,
                synth_ns: Some(2_000_000),
            },
        ];
        let mut buf = Vec::new();
        write_event_log_to(&mut buf, &events).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "text 0 5\naudio 0 150000000 2000000\n");
        assert_eq!(read_event_log_from(&buf[..]).unwrap(), events);
    }

    #[test]
    fn malformed_lines() {
        assert!(read_event_log_from(&b"speech 0 1\n"[..]).is_err());
        assert!(read_event_log_from(&b"text 0\n"[..]).is_err());
        assert!(read_event_log_from(&b"text -1 4\n"[..]).is_err());
        assert_eq!(read_event_log_from(&b"# header\n\n"[..]).unwrap(), vec![]);
    }
}
