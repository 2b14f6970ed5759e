//! Encoder and decoder networks.

use std::sync::Arc;

use rand::Rng;

use super::CodecConfig;
use crate::dsp::{StftConfig, StftKernel};
use crate::error::{Error, Result};
use crate::nn::ops::concat_cols;
use crate::nn::ops::concat_rows;
use crate::nn::{Bound, LayerNorm, Linear, ParamId, ParamStore, Tensor, Var};

/// Causal ConvNeXt block: depthwise conv → norm → expand → GELU → project, plus skip.
#[derive(Debug, Clone)]
pub(crate) struct ConvNextBlock {
    dw: ParamId,
    dw_bias: ParamId,
    norm: LayerNorm,
    expand: Linear,
    project: Linear,
    kernel: usize,
    width: usize,
}

impl ConvNextBlock {
    fn new(store: &mut ParamStore<f32>, name: &str, width: usize, cfg: &CodecConfig, rng: &mut impl Rng) -> Self {
        let std = (1.0 / cfg.conv_kernel as f64).sqrt();
        Self {
            dw: store.add_normal(format!("{name}.dw"), &[cfg.conv_kernel, width], std, rng),
            dw_bias: store.add_zeros(format!("{name}.dw_bias"), &[width]),
            norm: LayerNorm::new(store, &format!("{name}.norm"), width),
            expand: Linear::new(store, &format!("{name}.expand"), width, cfg.expansion * width, true, rng),
            project: Linear::new(store, &format!("{name}.project"), cfg.expansion * width, width, true, rng),
            kernel: cfg.conv_kernel,
            width,
        }
    }

    /// Runs the block; with `history` (the previous `kernel − 1` input rows)
    /// the convolution continues from it instead of from zeros, and the
    /// history is advanced.
    fn forward<'g>(&self, p: &Bound<'g, f32>, x: Var<'g, f32>, history: Option<&mut Tensor<f32>>) -> Var<'g, f32> {
        let w = p.get(self.dw);
        let conv = match history {
            None => x.depthwise_causal_conv(w),
            Some(h) => {
                let keep = self.kernel - 1;
                let g = p.graph();
                let t = x.shape()[0];
                let joined = concat_rows(&[g.constant(h.clone()), x]);
                let total = joined.value();
                let start = total.rows() - keep;
                *h = Tensor::new(vec![keep, self.width], total.data()[start * self.width..].to_vec())
                    .expect("history shape");
                joined.depthwise_causal_conv(w).slice_rows(keep, keep + t)
            }
        };
        let y = self.norm.forward(p, conv.add_row(p.get(self.dw_bias)));
        let y = self.project.forward(p, self.expand.forward(p, y).gelu());
        x.add(y)
    }

    fn empty_history(&self) -> Tensor<f32> {
        Tensor::zeros(&[self.kernel - 1, self.width])
    }
}

/// Stride = kernel convolution: groups of `stride` frames → one frame.
#[derive(Debug, Clone)]
struct Down {
    linear: Linear,
    stride: usize,
}

impl Down {
    fn forward<'g>(&self, p: &Bound<'g, f32>, x: Var<'g, f32>) -> Var<'g, f32> {
        let (t, c) = (x.shape()[0], x.shape()[1]);
        self.linear.forward(p, x.reshape(&[t / self.stride, self.stride * c]))
    }
}

/// Transposed stride = kernel convolution: one frame → `stride` frames.
#[derive(Debug, Clone)]
struct Up {
    linear: Linear,
    stride: usize,
}

impl Up {
    fn forward<'g>(&self, p: &Bound<'g, f32>, x: Var<'g, f32>) -> Var<'g, f32> {
        let t = x.shape()[0];
        let out = self.linear.forward(p, x);
        out.reshape(&[t * self.stride, self.linear.output / self.stride])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Encoder {
    input: Linear,
    stages: Vec<(Vec<ConvNextBlock>, Down)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Decoder {
    stages: Vec<(Up, Vec<ConvNextBlock>)>,
    head: Linear,
}

/// Encoder, decoder and their parameters.
#[derive(Debug, Clone)]
pub struct CodecModel {
    config: CodecConfig,
    params: ParamStore<f32>,
    encoder: Encoder,
    decoder: Decoder,
    kernel: Arc<StftKernel>,
}

impl CodecModel {
    /// Random weights, zero biases.
    pub fn new(config: CodecConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let widths = config.widths();
        let stages = widths.len() - 1;
        let input = Linear::new(&mut store, "enc.input", config.input_channels(), widths[0], true, rng);
        let enc_stages = (0..stages)
            .map(|s| {
                let blocks = (0..config.blocks_per_stage)
                    .map(|b| ConvNextBlock::new(&mut store, &format!("enc.s{s}.b{b}"), widths[s], &config, rng))
                    .collect();
                let down = Down {
                    linear: Linear::new(
                        &mut store,
                        &format!("enc.s{s}.down"),
                        config.stride * widths[s],
                        widths[s + 1],
                        true,
                        rng,
                    ),
                    stride: config.stride,
                };
                (blocks, down)
            })
            .collect();
        let dec_stages = (0..stages)
            .rev()
            .map(|s| {
                let up = Up {
                    linear: Linear::new(
                        &mut store,
                        &format!("dec.s{s}.up"),
                        widths[s + 1],
                        config.stride * widths[s],
                        true,
                        rng,
                    ),
                    stride: config.stride,
                };
                let blocks = (0..config.blocks_per_stage)
                    .map(|b| ConvNextBlock::new(&mut store, &format!("dec.s{s}.b{b}"), widths[s], &config, rng))
                    .collect();
                (up, blocks)
            })
            .collect();
        let head = Linear::new(&mut store, "dec.head", widths[0], config.input_channels(), true, rng);
        let kernel = Arc::new(StftKernel::new(StftConfig::causal(config.window, config.hop)?)?);
        Ok(Self {
            config,
            params: store,
            encoder: Encoder {
                input,
                stages: enc_stages,
            },
            decoder: Decoder {
                stages: dec_stages,
                head,
            },
            kernel,
        })
    }

    /// Rebuilds the model for `config` and loads `params` into it.
    pub fn from_params(config: CodecConfig, params: &ParamStore<f32>) -> Result<Self> {
        let mut model = Self::new(config, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        model.params.load_from(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub(crate) fn kernel(&self) -> &Arc<StftKernel> {
        &self.kernel
    }

    /// Encoder input: `[log1p |X| ‖ phase]` per causal STFT frame of `samples`
    /// (already padded to whole latent frames).
    pub(crate) fn input_features(&self, samples: &[f32]) -> Tensor<f32> {
        let x: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
        let spec = self.kernel.analyze(&x);
        let bins = self.config.bins();
        let mut data = Vec::with_capacity(spec.len() * 2);
        for frame in spec.chunks(bins) {
            data.extend(frame.iter().map(|c| c.norm().ln_1p() as f32));
            data.extend(frame.iter().map(|c| c.im.atan2(c.re) as f32));
        }
        Tensor::new(vec![spec.len() / bins, 2 * bins], data).expect("feature shape")
    }

    /// Latent frames `[T, D]` for padded input samples.
    pub(crate) fn encode_graph<'g>(&self, p: &Bound<'g, f32>, samples: &[f32]) -> Var<'g, f32> {
        let feats = p.graph().constant(self.input_features(samples));
        let mut h = self.encoder.input.forward(p, feats);
        for (blocks, down) in &self.encoder.stages {
            for b in blocks {
                h = b.forward(p, h, None);
            }
            h = down.forward(p, h);
        }
        h
    }

    /// Network part of the decoder: latents `[T, D]` → STFT spectra `[T·4096/hop, 2·bins]`.
    pub(crate) fn decode_spectra<'g>(
        &self,
        p: &Bound<'g, f32>,
        latents: Var<'g, f32>,
        mut histories: Option<&mut [Tensor<f32>]>,
    ) -> Var<'g, f32> {
        let mut h = latents;
        let mut slot = 0;
        for (up, blocks) in &self.decoder.stages {
            h = up.forward(p, h);
            for b in blocks {
                let hist = histories.as_deref_mut().map(|hs| &mut hs[slot]);
                h = b.forward(p, h, hist);
                slot += 1;
            }
        }
        let out = self.decoder.head.forward(p, h);
        let bins = self.config.bins();
        let cap = self.config.max_magnitude.ln_1p() as f32;
        let mag = out.slice_cols(0, bins).clamp(0.0, cap).expm1();
        let phase = out.slice_cols(bins, 2 * bins);
        concat_cols(&[mag.mul(phase.cos()), mag.mul(phase.sin())])
    }

    /// Full decoder: latents → `T · compression` samples.
    pub(crate) fn decode_graph<'g>(&self, p: &Bound<'g, f32>, latents: Var<'g, f32>) -> Var<'g, f32> {
        let t = latents.shape()[0];
        let spectra = self.decode_spectra(p, latents, None);
        spectra.istft(
            self.kernel.clone(),
            -(self.config.latency_samples() as isize),
            t * self.config.compression(),
            self.synthesis_gain(),
        )
    }

    pub(crate) fn synthesis_gain(&self) -> f64 {
        1.0 / StftConfig::causal(self.config.window, self.config.hop)
            .and_then(|c| c.cola_constant())
            .expect("validated STFT config")
    }

    pub(crate) fn decoder_histories(&self) -> Vec<Tensor<f32>> {
        self.decoder
            .stages
            .iter()
            .flat_map(|(_, blocks)| blocks.iter().map(ConvNextBlock::empty_history))
            .collect()
    }

    pub(crate) fn check_latents(&self, dim: usize) -> Result<()> {
        if dim != self.config.latent_dim() {
            return Err(Error::ShapeMismatch(format!(
                "latents have {dim} dims, codec expects {}",
                self.config.latent_dim()
            )));
        }
        Ok(())
    }
}
