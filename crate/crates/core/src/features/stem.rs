//! Convolutional encoder stem and the two-layer adaptor.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{FeatureSequence, STEM_FRAME_RATE};
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::nn::ops::gelu_scalar;

fn random(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor<f32> {
    let normal = Normal::new(0.0, (1.0 / rows as f64).sqrt()).expect("valid std");
    Tensor::from_fn(&[rows, cols], |_| normal.sample(rng) as f32)
}

/// Identity matrix, cropped or zero-padded to `rows × cols`.
fn eye(rows: usize, cols: usize) -> Tensor<f32> {
    Tensor::from_fn(&[rows, cols], |i| if i / cols == i % cols { 1.0 } else { 0.0 })
}

/// Kernel-3 convolution with one frame of zero padding on each side.
/// `weight` is `[3·C_in, C_out]`, tap-major.
fn conv3(x: &Tensor<f32>, weight: &Tensor<f32>, bias: &[f32], stride: usize) -> Tensor<f32> {
    let (n, c) = (x.rows(), x.cols());
    let out_len = if n == 0 { 0 } else { (n - 1) / stride + 1 };
    let mut cols = vec![0.0f32; out_len * 3 * c];
    for t in 0..out_len {
        for k in 0..3 {
            let src = (t * stride + k) as isize - 1;
            if src >= 0 && (src as usize) < n {
                cols[(t * 3 + k) * c..(t * 3 + k + 1) * c].copy_from_slice(x.row(src as usize));
            }
        }
    }
    let cols = Tensor::new(vec![out_len, 3 * c], cols).expect("im2col");
    let mut y = cols.matmul(weight).expect("conv shapes");
    let width = y.cols();
    for row in y.data_mut().chunks_mut(width) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

/// `conv(k3) → GELU → conv(k3, stride 2) → GELU`, 100 Hz mel in, 50 Hz out.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStem {
    pub conv1: Tensor<f32>,
    pub bias1: Vec<f32>,
    pub conv2: Tensor<f32>,
    pub bias2: Vec<f32>,
}

impl EncoderStem {
    pub fn new(input: usize, width: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv1: random(rng, 3 * input, width),
            bias1: vec![0.0; width],
            conv2: random(rng, 3 * width, width),
            bias2: vec![0.0; width],
        }
    }

    /// Centre taps are (cropped) identities, side taps zero.
    pub fn identity(input: usize, width: usize) -> Self {
        let mut conv1 = Tensor::zeros(&[3 * input, width]);
        let mut conv2 = Tensor::zeros(&[3 * width, width]);
        conv1.data_mut()[input * width..2 * input * width].copy_from_slice(eye(input, width).data());
        conv2.data_mut()[width * width..2 * width * width].copy_from_slice(eye(width, width).data());
        Self {
            conv1,
            bias1: vec![0.0; width],
            conv2,
            bias2: vec![0.0; width],
        }
    }

    pub fn input_channels(&self) -> usize {
        self.conv1.rows() / 3
    }

    pub fn width(&self) -> usize {
        self.conv2.cols()
    }

    pub fn forward(&self, mel: &MelSpectrogram) -> Result<FeatureSequence> {
        if mel.n_mels() != self.input_channels() {
            return Err(Error::ShapeMismatch(format!(
                "stem expects {} mel channels, got {}",
                self.input_channels(),
                mel.n_mels()
            )));
        }
        let x = Tensor::new(vec![mel.len(), mel.n_mels()], mel.frames().iter().flatten().copied().collect())?;
        let h = conv3(&x, &self.conv1, &self.bias1, 1).map(gelu_scalar);
        let y = conv3(&h, &self.conv2, &self.bias2, 2).map(gelu_scalar);
        FeatureSequence::new(y.into_data(), self.width(), STEM_FRAME_RATE)
    }
}

/// `W₂ · GELU(W₁ x + b₁) + b₂`, applied per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Adaptor {
    pub w1: Tensor<f32>,
    pub b1: Vec<f32>,
    pub w2: Tensor<f32>,
    pub b2: Vec<f32>,
}

impl Adaptor {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: random(rng, input, hidden),
            b1: vec![0.0; hidden],
            w2: random(rng, hidden, output),
            b2: vec![0.0; output],
        }
    }

    /// Cropped/padded identity weights and zero biases.
    pub fn identity(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: eye(input, hidden),
            b1: vec![0.0; hidden],
            w2: eye(hidden, output),
            b2: vec![0.0; output],
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_width(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, feats: &FeatureSequence) -> Result<FeatureSequence> {
        if feats.dim() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "adaptor expects width {}, got {}",
                self.input_width(),
                feats.dim()
            )));
        }
        let x = Tensor::new(vec![feats.len(), feats.dim()], feats.data().to_vec())?;
        let affine = |x: &Tensor<f32>, w: &Tensor<f32>, b: &[f32]| -> Result<Tensor<f32>> {
            let mut y = x.matmul(w)?;
            let width = y.cols();
            for row in y.data_mut().chunks_mut(width) {
                for (v, bv) in row.iter_mut().zip(b) {
                    *v += bv;
                }
            }
            Ok(y)
        };
        let h = affine(&x, &self.w1, &self.b1)?.map(gelu_scalar);
        let y = affine(&h, &self.w2, &self.b2)?;
        Ok(FeatureSequence::new(y.into_data(), self.output_width(), feats.frame_rate())?
            .with_meta(feats.window_index, feats.valid_frames))
    }
}
