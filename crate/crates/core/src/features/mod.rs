//! Speech-understanding front end: 30 s windowing, a convolutional encoder
//! stem at 50 Hz, stride-2 pooling and the adaptor into the LM width.

mod file;
mod stem;

pub use file::{read_features, read_features_from, write_features, write_features_to};
pub use stem::{Adaptor, EncoderStem};

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioBuffer, MelConfig, MelSpectrogram, resample};
use crate::error::{Error, Result};

/// Input rate of the feature path.
pub const FEATURE_SAMPLE_RATE: u32 = 16_000;
pub const WINDOW_SECONDS: f64 = 30.0;
pub const MEL_CHANNELS: usize = 128;
pub const MEL_FRAME_RATE: u32 = 100;
pub const STEM_FRAME_RATE: u32 = 50;
pub const POOLED_FRAME_RATE: u32 = 25;
/// Encoder width at full size.
pub const REFERENCE_ENCODER_WIDTH: usize = 1280;
/// Window caps: 30 s, 2.5 min and 10 min of context.
pub const REFERENCE_MAX_WINDOWS_SHORT: usize = 1;
pub const REFERENCE_MAX_WINDOWS_MEDIUM: usize = 5;
pub const REFERENCE_MAX_WINDOWS_LONG: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadPolicy {
    ZeroPadToFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowPlan {
    pub window_seconds: f64,
    pub max_windows: usize,
    pub pad_policy: PadPolicy,
}

impl Default for WindowPlan {
    fn default() -> Self {
        Self {
            window_seconds: WINDOW_SECONDS,
            max_windows: REFERENCE_MAX_WINDOWS_LONG,
            pad_policy: PadPolicy::ZeroPadToFull,
        }
    }
}

impl WindowPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds > 0.0) || self.max_windows == 0 {
            return Err(Error::InvalidConfig(format!(
                "window plan needs positive length and ≥ 1 window, got {} s × {}",
                self.window_seconds, self.max_windows
            )));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_seconds * FEATURE_SAMPLE_RATE as f64).round() as usize
    }
}

/// One zero-padded analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioWindow {
    pub index: usize,
    pub audio: AudioBuffer,
    pub valid_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunks {
    pub windows: Vec<AudioWindow>,
    /// Samples past the window cap that were dropped.
    pub truncated_samples: usize,
}

/// Splits 16 kHz audio into non-overlapping windows, padding the last one.
pub fn chunk_windows(audio: &AudioBuffer, plan: &WindowPlan) -> Result<Chunks> {
    plan.validate()?;
    audio.require_non_empty()?;
    if audio.sample_rate() != FEATURE_SAMPLE_RATE {
        return Err(Error::RateMismatch {
            expected: FEATURE_SAMPLE_RATE,
            actual: audio.sample_rate(),
        });
    }
    let size = plan.window_samples();
    let needed = audio.len().div_ceil(size);
    let kept = needed.min(plan.max_windows);
    let truncated_samples = audio.len().saturating_sub(kept * size);
    let windows = audio
        .samples()
        .chunks(size)
        .take(kept)
        .enumerate()
        .map(|(index, chunk)| {
            let mut samples = chunk.to_vec();
            samples.resize(size, 0.0);
            AudioWindow {
                index,
                audio: AudioBuffer::new(samples, FEATURE_SAMPLE_RATE).expect("window of valid samples"),
                valid_samples: chunk.len(),
            }
        })
        .collect();
    Ok(Chunks {
        windows,
        truncated_samples,
    })
}

/// Time-major `N × d` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<f32>,
    len: usize,
    dim: usize,
    frame_rate: u32,
    pub window_index: usize,
    pub valid_frames: usize,
}

impl FeatureSequence {
    pub fn new(frames: Vec<f32>, dim: usize, frame_rate: u32) -> Result<Self> {
        if dim == 0 || frames.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!("{} values do not form rows of {dim}", frames.len())));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("non-finite feature".into()));
        }
        let len = frames.len() / dim;
        Ok(Self {
            frames,
            len,
            dim,
            frame_rate,
            window_index: 0,
            valid_frames: len,
        })
    }

    pub fn from_mel(mel: &MelSpectrogram) -> Result<Self> {
        let rate = mel.frame_rate().round() as u32;
        Self::new(mel.frames().iter().flatten().copied().collect(), mel.n_mels(), rate)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> u32 {
        self.frame_rate
    }

    pub fn data(&self) -> &[f32] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn with_meta(mut self, window_index: usize, valid_frames: usize) -> Self {
        self.window_index = window_index;
        self.valid_frames = valid_frames.min(self.len);
        self
    }
}

/// Averages adjacent frame pairs; an odd trailing frame is dropped.
pub fn pool_stride2(feats: &FeatureSequence) -> Result<FeatureSequence> {
    if feats.is_empty() {
        return Err(Error::EmptyInput);
    }
    if feats.frame_rate != STEM_FRAME_RATE {
        return Err(Error::InvalidConfig(format!(
            "pooling expects {STEM_FRAME_RATE} Hz features, got {} Hz",
            feats.frame_rate
        )));
    }
    let d = feats.dim;
    let out: Vec<f32> = (0..feats.len / 2)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| 0.5 * (feats.frames[2 * i * d + j] + feats.frames[(2 * i + 1) * d + j]))
        .collect();
    Ok(FeatureSequence::new(out, d, POOLED_FRAME_RATE)?.with_meta(feats.window_index, feats.valid_frames / 2))
}

/// Frame counts at each stage for one window of `samples` 16 kHz samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageCounts {
    pub mel: usize,
    pub stem: usize,
    pub pooled: usize,
}

impl StageCounts {
    pub fn for_samples(samples: usize, mel: &MelConfig) -> Self {
        let m = mel.frame_count(samples);
        let s = m.div_ceil(2);
        Self {
            mel: m,
            stem: s,
            pooled: s / 2,
        }
    }
}

/// Output of the full front end for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub index: usize,
    pub counts: StageCounts,
    pub valid: StageCounts,
    pub tokens: FeatureSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureReport {
    pub windows: Vec<WindowFeatures>,
    pub truncated_samples: usize,
}

/// Mel → stem → pool → adaptor, end to end.
#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    pub plan: WindowPlan,
    pub mel: MelConfig,
    pub stem: EncoderStem,
    pub adaptor: Adaptor,
}

impl FeaturePipeline {
    /// Runs every window (in parallel); results are ordered by window index.
    pub fn run(&self, audio: &AudioBuffer) -> Result<FeatureReport> {
        let audio = resample(audio, FEATURE_SAMPLE_RATE)?;
        let chunks = chunk_windows(&audio, &self.plan)?;
        let results: Vec<Result<WindowFeatures>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunks.windows.iter().map(|w| s.spawn(move || self.window(w))).collect();
            handles.into_iter().map(|h| h.join().expect("feature worker panicked")).collect()
        });
        let mut windows = results.into_iter().collect::<Result<Vec<_>>>()?;
        windows.sort_by_key(|w| w.index);
        Ok(FeatureReport {
            windows,
            truncated_samples: chunks.truncated_samples,
        })
    }

    fn window(&self, w: &AudioWindow) -> Result<WindowFeatures> {
        let valid = StageCounts::for_samples(w.valid_samples, &self.mel);
        let mel = MelSpectrogram::compute(&w.audio, &self.mel)?;
        let stem = self.stem.forward(&mel)?;
        let pooled = pool_stride2(&stem)?;
        let tokens = self.adaptor.forward(&pooled)?.with_meta(w.index, valid.pooled);
        Ok(WindowFeatures {
            index: w.index,
            counts: StageCounts {
                mel: mel.len(),
                stem: stem.len(),
                pooled: pooled.len(),
            },
            valid,
            tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn audio(seconds: f64) -> AudioBuffer {
        let n = (seconds * FEATURE_SAMPLE_RATE as f64).round() as usize;
        AudioBuffer::new((0..n).map(|i| ((i % 97) as f32 / 97.0) - 0.5).collect(), FEATURE_SAMPLE_RATE).unwrap()
    }

    #[test]
    fn seventy_five_seconds_gives_three_windows() {
        let c = chunk_windows(&audio(75.0), &WindowPlan::default()).unwrap();
        assert_eq!(c.windows.len(), 3);
        assert_eq!(c.windows.iter().map(|w| w.valid_samples).collect::<Vec<_>>(), vec![480_000, 480_000, 240_000]);
        assert!(c.windows.iter().all(|w| w.audio.len() == 480_000));
        assert!(c.windows[2].audio.samples()[240_000..].iter().all(|&v| v == 0.0));
        assert_eq!(c.truncated_samples, 0);
    }

    #[test]
    fn exact_window_is_not_padded() {
        let c = chunk_windows(&audio(30.0), &WindowPlan::default()).unwrap();
        assert_eq!(c.windows.len(), 1);
        assert_eq!(c.windows[0].valid_samples, 480_000);
    }

    #[test]
    fn ten_minutes_fit_the_long_cap() {
        let c = chunk_windows(&audio(600.0), &WindowPlan::default()).unwrap();
        assert_eq!((c.windows.len(), c.truncated_samples), (20, 0));
        let plan = WindowPlan {
            max_windows: REFERENCE_MAX_WINDOWS_MEDIUM,
            ..WindowPlan::default()
        };
        let c = chunk_windows(&audio(600.0), &plan).unwrap();
        assert_eq!((c.windows.len(), c.truncated_samples), (5, 450 * 16_000));
    }

    #[test]
    fn chunking_errors() {
        let empty = AudioBuffer::new(vec![], FEATURE_SAMPLE_RATE).unwrap();
        assert!(matches!(chunk_windows(&empty, &WindowPlan::default()), Err(Error::EmptyAudio)));
        let wrong = AudioBuffer::new(vec![0.0; 10], 44_100).unwrap();
        assert!(matches!(chunk_windows(&wrong, &WindowPlan::default()), Err(Error::RateMismatch { .. })));
    }

    #[test]
    fn pooling_definition() {
        let f = FeatureSequence::new(vec![1.0, 2.0, 3.0, 6.0, 9.0, 9.0], 2, STEM_FRAME_RATE).unwrap();
        let p = pool_stride2(&f).unwrap();
        assert_eq!(p.data(), &[2.0, 4.0]);
        assert_eq!(p.frame_rate(), POOLED_FRAME_RATE);
        let same = FeatureSequence::new(vec![0.5, -1.0, 0.5, -1.0], 2, STEM_FRAME_RATE).unwrap();
        assert_eq!(pool_stride2(&same).unwrap().data(), &[0.5, -1.0]);
        let empty = FeatureSequence::new(vec![], 2, STEM_FRAME_RATE).unwrap();
        assert!(matches!(pool_stride2(&empty), Err(Error::EmptyInput)));
    }

    #[test]
    fn stage_counts_for_a_full_window() {
        let c = StageCounts::for_samples(480_000, &MelConfig::feature_default(MEL_CHANNELS));
        assert_eq!((c.mel, c.stem, c.pooled), (3000, 1500, 750));
    }
}
