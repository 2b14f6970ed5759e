//! Streaming text-to-speech: interleaved text/audio decoding, mixture
//! sampling with iterative RVQ unmasking, teacher-forced training and the
//! synthesis loop.

mod events;
mod sample;
mod schedule;
mod session;
mod train;

pub use events::{read_event_log, read_event_log_from, write_event_log, write_event_log_to, TokenEvent, TokenKind};
pub use sample::{build_training_sample, Segment, TrainingSample, MAX_SAMPLE_SECONDS, MIN_SAMPLE_SECONDS};
pub use schedule::{UnmaskSchedule, REFERENCE_STEPS};
pub use session::{
    iterative_unmask, synthesize, ChunkSynth, Clock, CodecStreamer, MonotonicClock, Session, SimClock, Synthesis,
    TokenGenerator, UnmaskTrace,
};
pub use train::{evaluate, TrainingPair, TtsTrainConfig, TtsTrainer};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::concat_cols;
use crate::nn::{
    Bound, Checkpoint, DecoderConfig, Graph, Linear, MogHead, MogHeadConfig, ParamId, ParamStore, Tensor,
    TransformerDecoder, Var,
};
use crate::rvq::{CodebookSet, RvqCode};

/// Byte vocabulary plus specials.
pub const BYTE_VOCAB: usize = 256;
pub const PAD_TOKEN: u32 = 256;
pub const VOCAB_SIZE: usize = 257;
/// Parameter count of the full-size model.
pub const REFERENCE_PARAMETERS: u64 = 644_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtsConfig {
    pub decoder: DecoderConfig,
    pub mixtures: usize,
    pub head_hidden: usize,
    pub levels: usize,
    pub entries: usize,
    pub dim: usize,
    pub steps: usize,
    pub temperature: f64,
}

impl TtsConfig {
    pub fn toy() -> Self {
        Self {
            decoder: DecoderConfig {
                layers: 2,
                heads: 4,
                width: 64,
                ff_width: 128,
                max_len: 1024,
                rope_base: 10_000.0,
            },
            mixtures: 8,
            head_hidden: 128,
            levels: 8,
            entries: 64,
            dim: 24,
            steps: REFERENCE_STEPS,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.decoder.validate()?;
        UnmaskSchedule::new(self.levels, self.steps)?;
        if self.mixtures == 0 || self.head_hidden == 0 || self.dim == 0 || self.entries < 2 {
            return Err(Error::InvalidConfig("mixtures, hidden, dim must be positive and K ≥ 2".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::InvalidConfig("temperature must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn head(&self) -> MogHeadConfig {
        MogHeadConfig {
            mixtures: self.mixtures,
            dim: self.dim,
            hidden: self.head_hidden,
        }
    }

    /// Fails with `ConfigMismatch` unless `books` has this model's L, K and D.
    pub fn check_codebooks(&self, books: &CodebookSet) -> Result<()> {
        if (books.levels(), books.entries(), books.dim()) != (self.levels, self.entries, self.dim) {
            return Err(Error::ConfigMismatch(format!(
                "codebooks are L={} K={} D={}, model expects L={} K={} D={}",
                books.levels(),
                books.entries(),
                books.dim(),
                self.levels,
                self.entries,
                self.dim
            )));
        }
        Ok(())
    }
}

/// Text embedding, audio-token projection, transformer decoder and mixture head.
#[derive(Debug, Clone)]
pub struct TtsModel {
    config: TtsConfig,
    params: ParamStore<f32>,
    text_embedding: ParamId,
    audio_projection: Linear,
    decoder: TransformerDecoder,
    head: MogHead,
}

impl TtsModel {
    pub fn new(config: TtsConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let w = config.decoder.width;
        let text_embedding = store.add_normal("text_embedding", &[VOCAB_SIZE, w], 1.0, rng);
        let audio_projection = Linear::new(&mut store, "audio_projection", config.dim, w, true, rng);
        let decoder = TransformerDecoder::new(config.decoder, &mut store, "decoder", rng)?;
        let head = MogHead::new(config.head(), w, &mut store, "head", rng);
        Ok(Self {
            config,
            params: store,
            text_embedding,
            audio_projection,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &TtsConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn decoder(&self) -> &TransformerDecoder {
        &self.decoder
    }

    pub fn head(&self) -> &MogHead {
        &self.head
    }

    pub(crate) fn check_tokens(&self, text: &[u32]) -> Result<Vec<usize>> {
        text.iter()
            .map(|&t| {
                if (t as usize) < VOCAB_SIZE {
                    Ok(t as usize)
                } else {
                    Err(Error::InvalidConfig(format!("token {t} outside vocabulary of {VOCAB_SIZE}")))
                }
            })
            .collect()
    }

    pub(crate) fn embed_text<'g>(&self, p: &Bound<'g, f32>, text: &[u32]) -> Result<Var<'g, f32>> {
        Ok(p.get(self.text_embedding).gather_rows(&self.check_tokens(text)?))
    }

    pub(crate) fn embed_audio<'g>(&self, p: &Bound<'g, f32>, cumulative: Tensor<f32>) -> Var<'g, f32> {
        self.audio_projection.forward(p, p.graph().constant(cumulative))
    }

    /// Interleaved `[t₀, a₀, t₁, a₁, …]` embeddings, `[2n, W]`.
    pub(crate) fn interleave<'g>(&self, text: Var<'g, f32>, audio: Var<'g, f32>) -> Var<'g, f32> {
        let (n, w) = (text.shape()[0], text.shape()[1]);
        concat_cols(&[text, audio]).reshape(&[2 * n, w])
    }

    /// Decoder outputs at the text positions, which predict the audio token
    /// paired with each text token.
    pub(crate) fn text_hidden<'g>(
        &self,
        p: &Bound<'g, f32>,
        text: &[u32],
        codes: &[RvqCode],
        books: &CodebookSet,
    ) -> Result<Var<'g, f32>> {
        if text.len() != codes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} text tokens vs {} audio tokens",
                text.len(),
                codes.len()
            )));
        }
        if text.is_empty() {
            return Err(Error::EmptyInput);
        }
        self.config.check_codebooks(books)?;
        let mut full = Vec::with_capacity(codes.len() * books.dim());
        for c in codes {
            full.extend(books.decode(c, books.levels())?);
        }
        let audio = self.embed_audio(p, Tensor::new(vec![codes.len(), books.dim()], full)?);
        let x = self.interleave(self.embed_text(p, text)?, audio);
        let h = self.decoder.forward(p, x)?;
        let w = self.config.decoder.width;
        Ok(h.reshape(&[text.len(), 2 * w]).slice_cols(0, w))
    }

    /// Mean mixture NLL of the ground-truth cumulative embeddings, with
    /// `unmasked[i]` levels of code `i` given to the head as conditioning.
    pub fn teacher_forced_loss_graph<'g>(
        &self,
        p: &Bound<'g, f32>,
        text: &[u32],
        codes: &[RvqCode],
        books: &CodebookSet,
        unmasked: &[usize],
    ) -> Result<Var<'g, f32>> {
        let h = self.text_hidden(p, text, codes, books)?;
        if unmasked.len() != codes.len() || unmasked.iter().any(|&u| u > books.levels()) {
            return Err(Error::ShapeMismatch("one mask state in 0..=L per position".into()));
        }
        let d = books.dim();
        let mut partial = Vec::with_capacity(codes.len() * d);
        let mut target = Vec::with_capacity(codes.len() * d);
        for (c, &u) in codes.iter().zip(unmasked) {
            partial.extend(books.sum_levels(&c.indices[..u], 0));
            target.extend(books.decode(c, books.levels())?);
        }
        let n = codes.len();
        let out = self.head.forward(p, h, p.graph().constant(Tensor::new(vec![n, d], partial)?))?;
        Ok(out.nll(&Tensor::new(vec![n, d], target)?).mean())
    }

    /// Mixture predicted for every position of a teacher-forced pass.
    pub fn head_params(
        &self,
        text: &[u32],
        codes: &[RvqCode],
        books: &CodebookSet,
        unmasked: &[usize],
    ) -> Result<Vec<crate::nn::MoGParams>> {
        let g = Graph::inference();
        let p = self.params.bind(&g, false);
        let h = self.text_hidden(&p, text, codes, books)?;
        if unmasked.len() != codes.len() || unmasked.iter().any(|&u| u > books.levels()) {
            return Err(Error::ShapeMismatch("one mask state in 0..=L per position".into()));
        }
        let mut partial = Vec::with_capacity(codes.len() * books.dim());
        for (c, &u) in codes.iter().zip(unmasked) {
            partial.extend(books.sum_levels(&c.indices[..u], 0));
        }
        let e = g.constant(Tensor::new(vec![codes.len(), books.dim()], partial)?);
        let out = self.head.forward(&p, h, e)?;
        let cfg = self.config.head();
        Ok((0..codes.len()).map(|i| out.params(i, &cfg)).collect())
    }

    /// Evaluates [`teacher_forced_loss_graph`](Self::teacher_forced_loss_graph) without gradients.
    pub fn teacher_forced_loss(
        &self,
        text: &[u32],
        codes: &[RvqCode],
        books: &CodebookSet,
        unmasked: &[usize],
    ) -> Result<f64> {
        let g = Graph::inference();
        let p = self.params.bind(&g, false);
        Ok(self.teacher_forced_loss_graph(&p, text, codes, books, unmasked)?.item() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(serde_json::json!({ "kind": "tts", "config": self.config }), &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("tts") {
            return Err(Error::ConfigMismatch("checkpoint does not hold a TTS model".into()));
        }
        let config: TtsConfig = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| Error::ConfigMismatch(format!("tts config: {e}")))?;
        let mut model = Self::new(config, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        model.params.load_from(&ck.params)?;
        Ok(model)
    }
}

/// Bytes of `text` as tokens.
pub fn tokenize(text: &str) -> Vec<u32> {
    text.bytes().map(u32::from).collect()
}
