//! Causal STFT-domain convolutional codec: encoder, residual quantization,
//! mirrored decoder, streaming decode and the mel reconstruction loss.

mod config;
mod loss;
mod model;
mod stream;
mod tokens;
mod train;

pub use config::*;
pub use loss::{mel_recon_loss, mel_recon_loss_graph, MelLoss};
pub use model::CodecModel;
pub use stream::StreamState;
pub use tokens::{read_tokens, read_tokens_from, write_tokens, write_tokens_to, TokenFile};
pub use train::{synthetic_tones, CodecTrainConfig, CodecTrainReport, CodecTrainer};

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Graph, Tensor};
use crate::rvq::{CodebookSet, RvqCode};

/// `T × D` latent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub frames: Tensor<f32>,
    pub frames_per_second: f64,
}

impl LatentSequence {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        self.frames.row(i)
    }
}

impl CodecModel {
    fn check_rate(&self, audio: &AudioBuffer) -> Result<()> {
        if audio.sample_rate() != self.config().sample_rate {
            return Err(Error::RateMismatch {
                expected: self.config().sample_rate,
                actual: audio.sample_rate(),
            });
        }
        Ok(())
    }

    /// Zero-pads to whole latent frames.
    pub(crate) fn padded(&self, samples: &[f32]) -> Vec<f32> {
        let mut x = samples.to_vec();
        x.resize(self.config().latent_frames(samples.len()) * self.config().compression(), 0.0);
        x
    }

    /// `ceil(len / compression)` latent frames.
    pub fn encode(&self, audio: &AudioBuffer) -> Result<LatentSequence> {
        self.check_rate(audio)?;
        audio.require_non_empty()?;
        let g = Graph::inference();
        let p = self.params().bind(&g, false);
        let z = self.encode_graph(&p, &self.padded(audio.samples()));
        Ok(LatentSequence {
            frames: (*z.value()).clone(),
            frames_per_second: self.config().frames_per_second(),
        })
    }

    pub fn quantize(&self, latents: &LatentSequence, books: &CodebookSet) -> Result<Vec<RvqCode>> {
        self.check_latents(latents.dim())?;
        if books.dim() != latents.dim() {
            return Err(Error::ShapeMismatch(format!(
                "codebooks are {}-dimensional, latents {}",
                books.dim(),
                latents.dim()
            )));
        }
        let frames: Vec<Vec<f32>> = (0..latents.len()).map(|i| latents.frame(i).to_vec()).collect();
        books.encode_frames(&frames)
    }

    /// Cumulative embeddings of `codes`, `[T, D]`.
    pub fn embed(&self, codes: &[RvqCode], books: &CodebookSet) -> Result<Tensor<f32>> {
        self.check_latents(books.dim())?;
        let mut data = Vec::with_capacity(codes.len() * books.dim());
        for c in codes {
            data.extend(books.decode(c, books.levels())?);
        }
        Tensor::new(vec![codes.len(), books.dim()], data)
    }

    /// Decodes latents `[T, D]` to `T · compression` samples.
    pub fn decode_latents(&self, latents: &Tensor<f32>) -> Result<AudioBuffer> {
        self.check_latents(latents.cols())?;
        if latents.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        let g = Graph::inference();
        let p = self.params().bind(&g, false);
        let y = self.decode_graph(&p, g.constant(latents.clone()));
        AudioBuffer::new(y.value().data().to_vec(), self.config().sample_rate)
    }

    pub fn decode(&self, codes: &[RvqCode], books: &CodebookSet) -> Result<AudioBuffer> {
        if codes.is_empty() {
            return Err(Error::EmptyInput);
        }
        self.decode_latents(&self.embed(codes, books)?)
    }

    /// Input delayed by the synthesis latency and padded to whole frames:
    /// the signal a perfect decoder would emit.
    pub fn aligned_target(&self, samples: &[f32]) -> Vec<f32> {
        let lag = self.config().latency_samples();
        let padded = self.padded(samples);
        let mut out = vec![0.0; padded.len()];
        out[lag..].copy_from_slice(&padded[..padded.len() - lag]);
        out
    }

    /// Mel distance between the aligned input and its reconstruction,
    /// through the codebooks if given, else from continuous latents.
    pub fn reconstruction_distance(&self, audio: &AudioBuffer, books: Option<&CodebookSet>) -> Result<f64> {
        let latents = self.encode(audio)?;
        let out = match books {
            Some(b) => self.decode(&self.quantize(&latents, b)?, b)?,
            None => self.decode_latents(&latents.frames)?,
        };
        let target = AudioBuffer::new(self.aligned_target(audio.samples()), audio.sample_rate())?;
        mel_recon_loss(&target, &out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(serde_json::json!({ "kind": "codec", "config": self.config() }), self.params())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("codec") {
            return Err(Error::ConfigMismatch("checkpoint does not hold a codec".into()));
        }
        let config: CodecConfig = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| Error::ConfigMismatch(format!("codec config: {e}")))?;
        Self::from_params(config, &ck.params)
    }
}
