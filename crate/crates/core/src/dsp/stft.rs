//! Short-time Fourier analysis and overlap-add synthesis with a Hann window.
//!
//! Two framings are supported. [`Framing::Center`] reflect-pads the input by
//! half a window on both sides so frame `t` is centred on sample `t * hop`.
//! [`Framing::Causal`] zero-pads on the left only so frame `t` ends on sample
//! `t * hop + hop - 1`; the codec uses it because no frame looks ahead.
//! Both produce `ceil(len / hop)` frames.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::window::hann;
use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::real::Real;

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framing {
    Center,
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    pub framing: Framing,
}

impl StftConfig {
    pub fn new(window_size: usize, hop: usize, framing: Framing) -> Result<Self> {
        if hop == 0 || window_size == 0 {
            return Err(Error::InvalidConfig("window and hop must be at least one sample".into()));
        }
        if hop > window_size {
            return Err(Error::InvalidConfig(format!(
                "hop {hop} exceeds window size {window_size}"
            )));
        }
        Ok(Self {
            window_size,
            hop,
            framing,
        })
    }

    pub fn center(window_size: usize, hop: usize) -> Result<Self> {
        Self::new(window_size, hop, Framing::Center)
    }

    pub fn causal(window_size: usize, hop: usize) -> Result<Self> {
        Self::new(window_size, hop, Framing::Causal)
    }

    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    /// Signal index of the first sample covered by frame `t`.
    pub fn frame_start(&self, t: usize) -> isize {
        let base = (t * self.hop) as isize;
        match self.framing {
            Framing::Center => base - (self.window_size / 2) as isize,
            Framing::Causal => base + self.hop as isize - self.window_size as isize,
        }
    }

    /// Samples of look-behind beyond the current hop for causal framing.
    pub fn overhang(&self) -> usize {
        self.window_size - self.hop
    }

    /// Returns the constant `Σ_k w²(n + k·hop)` if the squared window
    /// overlap-adds to a constant, otherwise `InvalidConfig`.
    pub fn cola_constant(&self) -> Result<f64> {
        let w = hann(self.window_size);
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).map(|v| v * v).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 || (max - min) > 1e-9 * max {
            return Err(Error::InvalidConfig(format!(
                "window {} with hop {} violates constant overlap-add",
                self.window_size, self.hop
            )));
        }
        Ok(max)
    }
}

/// Complex spectra, one vector of `window_size / 2 + 1` bins per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrames<T = f32> {
    frames: Vec<Vec<Complex<T>>>,
    config: StftConfig,
    sample_rate: u32,
    signal_len: usize,
}

impl<T: Real> StftFrames<T> {
    pub fn new(
        frames: Vec<Vec<Complex<T>>>,
        config: StftConfig,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        let bins = config.bins();
        if let Some(bad) = frames.iter().position(|f| f.len() != bins) {
            return Err(Error::ShapeMismatch(format!(
                "frame {bad} has {} bins, expected {bins}",
                frames[bad].len()
            )));
        }
        Ok(Self {
            frames,
            config,
            sample_rate,
            signal_len,
        })
    }

    pub fn frames(&self) -> &[Vec<Complex<T>>] {
        &self.frames
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn hop(&self) -> usize {
        self.config.hop
    }

    pub fn window_size(&self) -> usize {
        self.config.window_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// STFT of an audio buffer (center framing, Hann, `n_fft == window_size`).
pub fn stft(audio: &AudioBuffer, window_size: usize, hop: usize) -> Result<StftFrames<f32>> {
    let config = StftConfig::center(window_size, hop)?;
    stft_samples(audio.samples(), audio.sample_rate(), config)
}

/// STFT at the caller's precision; accumulation is always 64-bit.
pub fn stft_samples<T: Real>(
    samples: &[T],
    sample_rate: u32,
    config: StftConfig,
) -> Result<StftFrames<T>> {
    let kernel = StftKernel::new(config)?;
    let x: Vec<f64> = samples.iter().map(|v| v.f64()).collect();
    let bins = config.bins();
    let spec = kernel.analyze(&x);
    let frames = spec
        .chunks(bins)
        .map(|f| f.iter().map(|c| Complex::new(T::of(c.re), T::of(c.im))).collect())
        .collect();
    StftFrames::new(frames, config, sample_rate, samples.len())
}

/// Inverse STFT back to the original signal length.
pub fn istft(frames: &StftFrames<f32>) -> Result<AudioBuffer> {
    let samples = istft_samples(frames)?;
    AudioBuffer::new(samples, frames.sample_rate())
}

/// Weighted overlap-add inverse, normalised by the squared-window envelope.
pub fn istft_samples<T: Real>(frames: &StftFrames<T>) -> Result<Vec<T>> {
    let config = frames.config();
    config.cola_constant()?;
    let kernel = StftKernel::new(config)?;
    let spec: Vec<Complex64> = frames
        .frames()
        .iter()
        .flat_map(|f| f.iter().map(|c| Complex64::new(c.re.f64(), c.im.f64())))
        .collect();
    let len = frames.signal_len();
    let time = kernel.frames_to_time(&spec);
    let mut out = kernel.overlap_add(&time, 0, len);
    let env = kernel.envelope(frames.len(), 0, len);
    for (y, e) in out.iter_mut().zip(env) {
        *y = if e > 1e-11 { *y / e } else { 0.0 };
    }
    Ok(out.into_iter().map(T::of).collect())
}

/// Frame-level STFT machinery, including the adjoints used for backpropagation.
pub struct StftKernel {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftKernel").field("config", &self.config).finish()
    }
}

impl StftKernel {
    pub fn new(config: StftConfig) -> Result<Self> {
        let config = StftConfig::new(config.window_size, config.hop, config.framing)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            window: hann(config.window_size),
            forward: planner.plan_fft_forward(config.window_size),
            inverse: planner.plan_fft_inverse(config.window_size),
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn source_index(&self, idx: isize, len: usize) -> Option<usize> {
        if len == 0 {
            return None;
        }
        match self.config.framing {
            Framing::Causal => (idx >= 0 && (idx as usize) < len).then_some(idx as usize),
            Framing::Center => Some(reflect(idx, len)),
        }
    }

    /// Windowed spectra, `frame_count × bins`, row-major.
    pub fn analyze(&self, x: &[f64]) -> Vec<Complex64> {
        let n = self.config.window_size;
        let bins = self.config.bins();
        let count = self.config.frame_count(x.len());
        let mut out = Vec::with_capacity(count * bins);
        let mut buf = vec![Complex64::default(); n];
        for t in 0..count {
            let start = self.config.frame_start(t);
            for (i, slot) in buf.iter_mut().enumerate() {
                let v = self
                    .source_index(start + i as isize, x.len())
                    .map_or(0.0, |j| x[j]);
                *slot = Complex64::new(v * self.window[i], 0.0);
            }
            self.forward.process(&mut buf);
            out.extend_from_slice(&buf[..bins]);
        }
        out
    }

    /// Adjoint of [`analyze`](Self::analyze): maps a gradient on the spectra
    /// (`re` and `im` parts packed as a complex number) to a gradient on `x`.
    pub fn analyze_adjoint(&self, grad: &[Complex64], len: usize) -> Vec<f64> {
        let n = self.config.window_size;
        let bins = self.config.bins();
        let mut out = vec![0.0; len];
        let mut buf = vec![Complex64::default(); n];
        for (t, g) in grad.chunks(bins).enumerate() {
            buf.iter_mut().for_each(|b| *b = Complex64::default());
            buf[..bins].copy_from_slice(g);
            self.inverse.process(&mut buf);
            let start = self.config.frame_start(t);
            for i in 0..n {
                if let Some(j) = self.source_index(start + i as isize, len) {
                    out[j] += self.window[i] * buf[i].re;
                }
            }
        }
        out
    }

    /// Inverse real DFT of each half spectrum, windowed: `frame_count × window`.
    pub fn frames_to_time(&self, spec: &[Complex64]) -> Vec<f64> {
        let n = self.config.window_size;
        let bins = self.config.bins();
        let scale = 1.0 / n as f64;
        let mut out = Vec::with_capacity(spec.len() / bins * n);
        let mut buf = vec![Complex64::default(); n];
        for frame in spec.chunks(bins) {
            buf[..bins].copy_from_slice(frame);
            for k in bins..n {
                buf[k] = frame[n - k].conj();
            }
            self.inverse.process(&mut buf);
            out.extend(buf.iter().zip(&self.window).map(|(c, w)| c.re * scale * w));
        }
        out
    }

    /// Adjoint of [`frames_to_time`](Self::frames_to_time).
    pub fn frames_to_time_adjoint(&self, grad: &[f64]) -> Vec<Complex64> {
        let n = self.config.window_size;
        let bins = self.config.bins();
        let scale = 1.0 / n as f64;
        let mut out = Vec::with_capacity(grad.len() / n * bins);
        let mut buf = vec![Complex64::default(); n];
        for frame in grad.chunks(n) {
            for (slot, (g, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex64::new(g * w, 0.0);
            }
            self.forward.process(&mut buf);
            for (k, c) in buf[..bins].iter().enumerate() {
                let mult = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                out.push(c * (mult * scale));
            }
        }
        out
    }

    /// Overlap-adds time frames onto positions `[origin, origin + len)`.
    pub fn overlap_add(&self, time: &[f64], origin: isize, len: usize) -> Vec<f64> {
        let n = self.config.window_size;
        let mut out = vec![0.0; len];
        for (t, frame) in time.chunks(n).enumerate() {
            let start = self.config.frame_start(t) - origin;
            for (i, v) in frame.iter().enumerate() {
                let p = start + i as isize;
                if p >= 0 && (p as usize) < len {
                    out[p as usize] += v;
                }
            }
        }
        out
    }

    /// Adjoint of [`overlap_add`](Self::overlap_add) for `frames` frames.
    pub fn overlap_add_adjoint(&self, grad: &[f64], origin: isize, frames: usize) -> Vec<f64> {
        let n = self.config.window_size;
        let mut out = vec![0.0; frames * n];
        for t in 0..frames {
            let start = self.config.frame_start(t) - origin;
            for i in 0..n {
                let p = start + i as isize;
                if p >= 0 && (p as usize) < grad.len() {
                    out[t * n + i] = grad[p as usize];
                }
            }
        }
        out
    }

    /// Squared-window envelope over positions `[origin, origin + len)`.
    pub fn envelope(&self, frames: usize, origin: isize, len: usize) -> Vec<f64> {
        let n = self.config.window_size;
        let sq: Vec<f64> = self.window.iter().map(|w| w * w).collect();
        let time: Vec<f64> = (0..frames).flat_map(|_| sq.iter().copied()).collect();
        debug_assert_eq!(time.len(), frames * n);
        self.overlap_add(&time, origin, len)
    }
}

fn reflect(idx: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut i = idx.rem_euclid(period);
    if i >= len as isize {
        i = period - i;
    }
    i as usize
}
