//! Deterministic signal-processing kernels shared by the 16 kHz feature path
//! and the 44.1 kHz codec path.
//!
//! Transforms accumulate in 64-bit and store 32-bit unless the caller asks for
//! a 64-bit result explicitly (the `*_samples` entry points are generic).

pub mod mel;
pub mod resample;
pub mod stft;
pub mod wav;
pub mod window;

pub use mel::{log_mel_f64, mel_power_f64, mel_spectrogram, MelConfig, MelFilterbank, MelScale, MelSpectrogram, LOG_FLOOR};
pub use resample::resample;
pub use stft::{istft, stft, Framing, StftConfig, StftFrames, StftKernel};

use crate::error::{Error, Result};

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    /// A sinusoid `amplitude * sin(2π f t + phase)`.
    pub fn tone(freq: f64, amplitude: f64, phase: f64, len: usize, sample_rate: u32) -> Result<Self> {
        let sr = sample_rate as f64;
        let samples = (0..len)
            .map(|n| (amplitude * (2.0 * std::f64::consts::PI * freq * n as f64 / sr + phase).sin()) as f32)
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptyAudio)
        } else {
            Ok(())
        }
    }
}
