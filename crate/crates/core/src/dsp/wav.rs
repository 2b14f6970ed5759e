//! RIFF WAV reading and writing: 16-bit PCM and 32-bit IEEE float.
//! Multi-channel input is downmixed to mono by averaging.

use std::io::{Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let reader = WavReader::open(path)?;
    decode(reader)
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<AudioBuffer> {
    decode(WavReader::new(reader)?)
}

fn decode<R: Read>(reader: WavReader<R>) -> Result<AudioBuffer> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("WAV declares zero channels".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::Format(format!(
                "unsupported WAV encoding {format:?} with {bits} bits"
            )))
        }
    };
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    let writer = WavWriter::create(path, spec_for(audio, encoding))?;
    encode(writer, audio, encoding)
}

pub fn write_wav_to<W: Write + Seek>(writer: W, audio: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    let writer = WavWriter::new(writer, spec_for(audio, encoding))?;
    encode(writer, audio, encoding)
}

fn spec_for(audio: &AudioBuffer, encoding: WavEncoding) -> WavSpec {
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample,
        sample_format,
    }
}

fn encode<W: Write + Seek>(mut writer: WavWriter<W>, audio: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    for &s in audio.samples() {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v)?;
            }
            WavEncoding::Float32 => writer.write_sample(s)?,
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn float_round_trip_is_exact() {
        let audio = AudioBuffer::tone(440.0, 0.7, 0.0, 1000, 44_100).unwrap();
        let mut buf = Cursor::new(Vec::new());
        write_wav_to(&mut buf, &audio, WavEncoding::Float32).unwrap();
        buf.set_position(0);
        assert_eq!(read_wav_from(buf).unwrap(), audio);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let audio = AudioBuffer::tone(440.0, 0.7, 0.0, 1000, 16_000).unwrap();
        let mut buf = Cursor::new(Vec::new());
        write_wav_to(&mut buf, &audio, WavEncoding::Pcm16).unwrap();
        buf.set_position(0);
        let back = read_wav_from(buf).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        for (a, b) in audio.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1.0 / 16_000.0);
        }
    }

    #[test]
    fn stereo_is_averaged() {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            for (l, r) in [(0.5f32, -0.5f32), (1.0, 0.0), (0.25, 0.75)] {
                w.write_sample(l).unwrap();
                w.write_sample(r).unwrap();
            }
            w.finalize().unwrap();
        }
        buf.set_position(0);
        assert_eq!(read_wav_from(buf).unwrap().samples(), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn unsupported_encodings_are_rejected() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            w.write_sample(5i32).unwrap();
            w.finalize().unwrap();
        }
        buf.set_position(0);
        assert!(matches!(read_wav_from(buf), Err(Error::Format(_))));
        let err = read_wav_from(Cursor::new(b"RIFFnope".to_vec())).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err:?}");
    }
}
