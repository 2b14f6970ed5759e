//! Codec hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REFERENCE_SAMPLE_RATE: u32 = 44_100;
pub const REFERENCE_WINDOW: usize = 32;
pub const REFERENCE_HOP: usize = 8;
pub const REFERENCE_INITIAL_WIDTH: usize = 384;
pub const REFERENCE_LATENT_DIM: usize = 512;
pub const REFERENCE_STAGES: usize = 3;
pub const REFERENCE_COMPRESSION: usize = 4096;
/// Latent frame rate as quoted, in frames per second.
pub const REFERENCE_FRAME_RATE_APPROX: f64 = 10.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub initial_width: usize,
    /// Output width of each downsampling stage; the last is the latent size.
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub stride: usize,
    pub conv_kernel: usize,
    pub expansion: usize,
    pub levels: usize,
    pub entries: usize,
    /// Upper bound on predicted linear magnitudes.
    pub max_magnitude: f64,
}

impl CodecConfig {
    pub fn reference() -> Self {
        Self {
            sample_rate: REFERENCE_SAMPLE_RATE,
            window: REFERENCE_WINDOW,
            hop: REFERENCE_HOP,
            initial_width: REFERENCE_INITIAL_WIDTH,
            stage_widths: vec![768, 1536, REFERENCE_LATENT_DIM],
            blocks_per_stage: 3,
            stride: 8,
            conv_kernel: 7,
            expansion: 3,
            levels: crate::rvq::REFERENCE_LEVELS,
            entries: crate::rvq::REFERENCE_ENTRIES,
            max_magnitude: 100.0,
        }
    }

    /// Same topology at desk scale.
    pub fn toy() -> Self {
        Self {
            initial_width: 16,
            stage_widths: vec![32, 64, 24],
            levels: 8,
            entries: 64,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.sample_rate == 0 || self.hop == 0 || self.window < self.hop {
            return bad(format!("bad STFT setup: window {} hop {}", self.window, self.hop));
        }
        if self.stage_widths.is_empty() || self.stage_widths.contains(&0) || self.initial_width == 0 {
            return bad("stage widths must be non-empty and positive".into());
        }
        if self.stride < 1 || self.conv_kernel < 1 || self.expansion < 1 {
            return bad("stride, kernel and expansion must be ≥ 1".into());
        }
        if self.levels == 0 || self.entries < 2 {
            return bad(format!("need ≥ 1 level and ≥ 2 entries, got {} / {}", self.levels, self.entries));
        }
        if self.entries > u16::MAX as usize + 1 {
            return bad("token files store indices as u16".into());
        }
        Ok(())
    }

    /// Input samples per latent frame: `hop · stride^stages`.
    pub fn compression(&self) -> usize {
        self.hop * self.stride.pow(self.stage_widths.len() as u32)
    }

    pub fn latent_dim(&self) -> usize {
        *self.stage_widths.last().expect("validated")
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate as f64 / self.compression() as f64
    }

    pub fn latent_frames(&self, samples: usize) -> usize {
        samples.div_ceil(self.compression())
    }

    pub fn bins(&self) -> usize {
        self.window / 2 + 1
    }

    /// Encoder input channels: log-magnitude and phase per bin.
    pub fn input_channels(&self) -> usize {
        2 * self.bins()
    }

    /// Samples by which decoded audio trails the input.
    pub fn latency_samples(&self) -> usize {
        self.window - self.hop
    }

    /// Channel width entering each stage, followed by the latent width.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.initial_width).chain(self.stage_widths.iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compression_and_frame_rate() {
        let c = CodecConfig::reference();
        assert_eq!(c.compression(), REFERENCE_COMPRESSION);
        assert_eq!(c.hop * 8 * 8 * 8, 4096);
        assert!((c.frames_per_second() - REFERENCE_FRAME_RATE_APPROX).abs() < 0.05);
        assert_eq!(c.latent_frames(44_100), 11);
        assert_eq!(c.latent_frames(4096), 1);
        assert_eq!(c.latent_dim(), 512);
        assert_eq!(c.input_channels(), 34);
        assert_eq!(CodecConfig::toy().compression(), 4096);
    }

    #[test]
    fn widths_double_until_the_last_stage() {
        let w = CodecConfig::reference().widths();
        assert_eq!(w, vec![384, 768, 1536, 512]);
        for pair in w[..3].windows(2) {
            assert_eq!(pair[1], 2 * pair[0]);
        }
        let t = CodecConfig::toy().widths();
        assert_eq!(t, vec![16, 32, 64, 24]);
    }
}
