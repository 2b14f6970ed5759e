//! Mel filterbank and log-mel spectrograms.

use serde::{Deserialize, Serialize};

use super::stft::{StftConfig, StftKernel};
use super::AudioBuffer;
use crate::error::{Error, Result};

/// Floor applied before `log10`.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelScale {
    /// `2595 · log10(1 + f / 700)`
    Htk,
    /// Linear below 1 kHz, logarithmic above.
    Slaney,
}

impl MelScale {
    pub fn hz_to_mel(self, hz: f64) -> f64 {
        match self {
            MelScale::Htk => 2595.0 * (1.0 + hz / 700.0).log10(),
            MelScale::Slaney => {
                let f_sp = 200.0 / 3.0;
                let min_log_hz = 1000.0;
                let min_log_mel = min_log_hz / f_sp;
                let logstep = 6.4f64.ln() / 27.0;
                if hz >= min_log_hz {
                    min_log_mel + (hz / min_log_hz).ln() / logstep
                } else {
                    hz / f_sp
                }
            }
        }
    }

    pub fn mel_to_hz(self, mel: f64) -> f64 {
        match self {
            MelScale::Htk => 700.0 * (10f64.powf(mel / 2595.0) - 1.0),
            MelScale::Slaney => {
                let f_sp = 200.0 / 3.0;
                let min_log_hz = 1000.0;
                let min_log_mel = min_log_hz / f_sp;
                let logstep = 6.4f64.ln() / 27.0;
                if mel >= min_log_mel {
                    min_log_hz * (logstep * (mel - min_log_mel)).exp()
                } else {
                    mel * f_sp
                }
            }
        }
    }
}

/// Analysis settings for a log-mel spectrogram, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub window_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub scale: MelScale,
}

impl MelConfig {
    /// Speech front end: 25 ms window, 10 ms hop at 16 kHz.
    pub fn feature_default(n_mels: usize) -> Self {
        Self {
            sample_rate: 16_000,
            window_size: 400,
            hop: 160,
            n_mels,
            scale: MelScale::Htk,
        }
    }

    /// Reconstruction-loss analysis at the codec rate (1024/256 at 44.1 kHz).
    pub fn codec_loss_default() -> Self {
        Self {
            sample_rate: 44_100,
            window_size: 1024,
            hop: 256,
            n_mels: 128,
            scale: MelScale::Htk,
        }
    }

    pub fn from_seconds(sample_rate: u32, n_mels: usize, window_s: f64, hop_s: f64) -> Result<Self> {
        let window = (window_s * sample_rate as f64).round();
        let hop = (hop_s * sample_rate as f64).round();
        if !(window >= 1.0) || !(hop >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "window {window_s}s / hop {hop_s}s shorter than one sample at {sample_rate} Hz"
            )));
        }
        Ok(Self {
            sample_rate,
            window_size: window as usize,
            hop: hop as usize,
            n_mels,
            scale: MelScale::Htk,
        })
    }

    pub fn stft_config(&self) -> Result<StftConfig> {
        StftConfig::center(self.window_size, self.hop)
    }

    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }
}

/// Triangular filters spanning 0 Hz to Nyquist, without area normalisation.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_mels: usize,
    bins: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(config: &MelConfig) -> Result<Self> {
        if config.n_mels == 0 {
            return Err(Error::InvalidConfig("n_mels must be positive".into()));
        }
        let n_fft = config.window_size;
        let bins = n_fft / 2 + 1;
        let sr = config.sample_rate as f64;
        let scale = config.scale;
        let mel_max = scale.hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| scale.mel_to_hz(mel_max * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let fft_freqs: Vec<f64> = (0..bins).map(|k| k as f64 * sr / n_fft as f64).collect();
        let mut weights = vec![0.0; config.n_mels * bins];
        for m in 0..config.n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for (k, &f) in fft_freqs.iter().enumerate() {
                let rise = (f - lo) / (mid - lo);
                let fall = (hi - f) / (hi - mid);
                weights[m * bins + k] = rise.min(fall).max(0.0);
            }
        }
        Ok(Self {
            n_mels: config.n_mels,
            bins,
            weights,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Row-major `n_mels × bins` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.bins)
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Log10 mel energies, one vector of `n_mels` values per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: Vec<Vec<f32>>,
    n_mels: usize,
    hop_seconds: f64,
    window_seconds: f64,
    sample_rate: u32,
    log_scaled: bool,
}

impl MelSpectrogram {
    pub fn compute(audio: &AudioBuffer, config: &MelConfig) -> Result<Self> {
        let log = log_mel_f64(audio.samples(), audio.sample_rate(), config)?;
        let frames = log
            .chunks(config.n_mels)
            .map(|f| f.iter().map(|&v| v as f32).collect())
            .collect();
        let sr = config.sample_rate as f64;
        Ok(Self {
            frames,
            n_mels: config.n_mels,
            hop_seconds: config.hop as f64 / sr,
            window_seconds: config.window_size as f64 / sr,
            sample_rate: config.sample_rate,
            log_scaled: true,
        })
    }

    /// Builds a spectrogram from existing frames (e.g. a decoded feature dump).
    pub fn from_frames(frames: Vec<Vec<f32>>, n_mels: usize, config: &MelConfig) -> Result<Self> {
        if let Some(bad) = frames.iter().position(|f| f.len() != n_mels) {
            return Err(Error::ShapeMismatch(format!(
                "mel frame {bad} has {} channels, expected {n_mels}",
                frames[bad].len()
            )));
        }
        let sr = config.sample_rate as f64;
        Ok(Self {
            frames,
            n_mels,
            hop_seconds: config.hop as f64 / sr,
            window_seconds: config.window_size as f64 / sr,
            sample_rate: config.sample_rate,
            log_scaled: true,
        })
    }

    pub fn frames(&self) -> &[Vec<f32>] {
        &self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_seconds
    }

    pub fn window_seconds(&self) -> f64 {
        self.window_seconds
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.hop_seconds
    }

    pub fn is_log_scaled(&self) -> bool {
        self.log_scaled
    }
}

/// Log-mel spectrogram with window and hop given in seconds.
pub fn mel_spectrogram(
    audio: &AudioBuffer,
    n_mels: usize,
    window_seconds: f64,
    hop_seconds: f64,
) -> Result<MelSpectrogram> {
    let config = MelConfig::from_seconds(audio.sample_rate(), n_mels, window_seconds, hop_seconds)?;
    MelSpectrogram::compute(audio, &config)
}

/// Power mel energies, `frames × n_mels` row-major, before the log.
pub fn mel_power_f64(samples: &[f32], sample_rate: u32, config: &MelConfig) -> Result<Vec<f64>> {
    if sample_rate != config.sample_rate {
        return Err(Error::RateMismatch {
            expected: config.sample_rate,
            actual: sample_rate,
        });
    }
    let kernel = StftKernel::new(config.stft_config()?)?;
    let bank = MelFilterbank::new(config)?;
    let x: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
    let spec = kernel.analyze(&x);
    let bins = bank.bins();
    let mut out = Vec::with_capacity(spec.len() / bins * config.n_mels);
    let mut power = vec![0.0; bins];
    for frame in spec.chunks(bins) {
        for (p, c) in power.iter_mut().zip(frame) {
            *p = c.norm_sqr();
        }
        out.extend(bank.apply(&power));
    }
    Ok(out)
}

/// `log10(max(mel, LOG_FLOOR))`, `frames × n_mels` row-major.
pub fn log_mel_f64(samples: &[f32], sample_rate: u32, config: &MelConfig) -> Result<Vec<f64>> {
    Ok(mel_power_f64(samples, sample_rate, config)?
        .into_iter()
        .map(|v| v.max(LOG_FLOOR).log10())
        .collect())
}
