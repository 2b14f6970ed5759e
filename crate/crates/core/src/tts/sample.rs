//! Same-speaker concatenation of short segments into training utterances.

use rand::Rng;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

pub const MIN_SAMPLE_SECONDS: f64 = 1.0;
pub const MAX_SAMPLE_SECONDS: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub speaker: u32,
    pub audio: AudioBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub speaker: u32,
    pub audio: AudioBuffer,
    /// Duration drawn for this sample; the audio meets or exceeds it.
    pub target_seconds: f64,
    /// Indices of the segments used, in order.
    pub segments: Vec<usize>,
}

/// Draws a target duration uniformly from `[1 s, 120 s]` and appends
/// segments picked uniformly with replacement until it is reached.
pub fn build_training_sample(segments: &[Segment], rng: &mut impl Rng) -> Result<TrainingSample> {
    let first = segments.first().ok_or(Error::EmptyInput)?;
    let (speaker, rate) = (first.speaker, first.audio.sample_rate());
    for s in segments {
        if s.speaker != speaker {
            return Err(Error::SpeakerMismatch);
        }
        if s.audio.sample_rate() != rate {
            return Err(Error::RateMismatch {
                expected: rate,
                actual: s.audio.sample_rate(),
            });
        }
        if s.audio.is_empty() {
            return Err(Error::EmptyAudio);
        }
    }
    let target_seconds = rng.random_range(MIN_SAMPLE_SECONDS..=MAX_SAMPLE_SECONDS);
    let target = (target_seconds * rate as f64).ceil() as usize;
    let mut samples = Vec::with_capacity(target);
    let mut used = Vec::new();
    while samples.len() < target {
        let i = rng.random_range(0..segments.len());
        samples.extend_from_slice(segments[i].audio.samples());
        used.push(i);
    }
    Ok(TrainingSample {
        speaker,
        audio: AudioBuffer::new(samples, rate)?,
        target_seconds,
        segments: used,
    })
}
