//! Polyphase windowed-sinc sample-rate conversion.

use super::window::kaiser;
use super::AudioBuffer;
use crate::error::{Error, Result};

/// Taps contributing to each output sample (per polyphase branch).
pub const TAPS_PER_PHASE: usize = 32;
/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 8.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Precomputed filter bank for a rational ratio `up / down`.
#[derive(Debug, Clone)]
pub struct PolyphaseResampler {
    up: usize,
    down: usize,
    cutoff: f64,
    /// `up` branches of `TAPS_PER_PHASE` taps each.
    phases: Vec<[f64; TAPS_PER_PHASE]>,
}

impl PolyphaseResampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self> {
        if source_rate == 0 || target_rate == 0 {
            return Err(Error::InvalidConfig("sample rates must be positive".into()));
        }
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = (target_rate as u64 / g) as usize;
        let down = (source_rate as u64 / g) as usize;
        // Anti-aliasing cutoff in cycles per input sample, slightly below the lower Nyquist.
        let cutoff = 0.5 * (up as f64 / down as f64).min(1.0) * 0.95;
        let half = (TAPS_PER_PHASE / 2) as f64;
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps = [0.0; TAPS_PER_PHASE];
                let mut sum = 0.0;
                for (j, tap) in taps.iter_mut().enumerate() {
                    // tap j multiplies input sample floor(t) - half + 1 + j
                    let x = (j as f64 - half + 1.0) - frac;
                    let arg = 2.0 * cutoff * x;
                    let sinc = if arg == 0.0 {
                        1.0
                    } else {
                        (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
                    };
                    *tap = 2.0 * cutoff * sinc * kaiser(x / half, KAISER_BETA);
                    sum += *tap;
                }
                // unity DC gain per branch
                for tap in &mut taps {
                    *tap /= sum;
                }
                taps
            })
            .collect();
        Ok(Self {
            up,
            down,
            cutoff,
            phases,
        })
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as f64) * self.up as f64 / self.down as f64).round() as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        let out_len = self.output_len(input.len());
        let half = (TAPS_PER_PHASE / 2) as isize;
        (0..out_len)
            .map(|n| {
                // output n sits at input position n * down / up
                let pos = n * self.down;
                let base = (pos / self.up) as isize;
                let phase = pos % self.up;
                let taps = &self.phases[phase];
                let mut acc = 0.0f64;
                for (j, &h) in taps.iter().enumerate() {
                    let idx = base - half + 1 + j as isize;
                    if idx >= 0 && (idx as usize) < input.len() {
                        acc += h * input[idx as usize] as f64;
                    }
                }
                acc as f32
            })
            .collect()
    }
}

/// Band-limited resampling to `target_rate`. Identity when the rates match.
pub fn resample(audio: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    audio.require_non_empty()?;
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target rate must be positive".into()));
    }
    if audio.sample_rate() == target_rate {
        return Ok(audio.clone());
    }
    let resampler = PolyphaseResampler::new(audio.sample_rate(), target_rate)?;
    AudioBuffer::new(resampler.process(audio.samples()), target_rate)
}
