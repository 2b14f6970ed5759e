//! Incremental decoding: one audio token per text token, and the synthesis
//! loop that streams each token through the codec.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::events::{TokenEvent, TokenKind};
use super::{TtsModel, UnmaskSchedule};
use crate::codec::{CodecModel, StreamState};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::nn::{Graph, KvCache, MogHead, ParamStore, Tensor};
use crate::rvq::{CodebookSet, MaskState, RvqCode};

/// Committed level counts after each unmasking iteration, with the code at
/// that point (masked levels are `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnmaskTrace {
    pub code: RvqCode,
    pub committed: Vec<usize>,
    pub snapshots: Vec<Vec<Option<usize>>>,
}

/// Samples one RVQ code for a single decoder state `hidden: [1, W]`.
///
/// Each iteration conditions the head on the committed levels, samples a
/// cumulative embedding, re-quantizes what the committed levels leave over
/// and commits the next group.
pub fn iterative_unmask(
    head: &MogHead,
    params: &ParamStore<f32>,
    hidden: &Tensor<f32>,
    books: &CodebookSet,
    schedule: &UnmaskSchedule,
    temperature: f64,
    rng: &mut impl rand::Rng,
) -> Result<UnmaskTrace> {
    if schedule.levels() != books.levels() {
        return Err(Error::ConfigMismatch(format!(
            "schedule covers {} levels, codebooks have {}",
            schedule.levels(),
            books.levels()
        )));
    }
    let cfg = *head.config();
    let mut committed: Vec<usize> = Vec::with_capacity(books.levels());
    let mut mask = MaskState::new(books.levels());
    let mut trace = UnmaskTrace {
        code: RvqCode::new(Vec::new()),
        committed: Vec::with_capacity(schedule.steps()),
        snapshots: Vec::with_capacity(schedule.steps()),
    };
    for group in schedule.groups() {
        let partial = books.sum_levels(&committed, 0);
        let g = Graph::inference();
        let p = params.bind(&g, false);
        let h = g.constant(hidden.clone());
        let e = g.constant(Tensor::new(vec![1, books.dim()], partial.clone())?);
        let mog = head.forward(&p, h, e)?.params(0, &cfg);
        let sample = mog.sample(rng, temperature);
        let residual: Vec<f32> = sample.iter().zip(&partial).map(|(s, c)| (*s - *c as f64) as f32).collect();
        let proposed = books.encode_levels(&residual, committed.len());
        committed.extend_from_slice(&proposed[..group.len()]);
        mask.advance(committed.len())?;
        trace.committed.push(mask.unmasked());
        trace.snapshots.push((0..books.levels()).map(|l| committed.get(l).copied()).collect());
    }
    trace.code = RvqCode::new(committed);
    Ok(trace)
}

/// Produces one audio token per text token.
pub trait TokenGenerator {
    fn step(&mut self, text: u32) -> Result<RvqCode>;
}

/// Turns one audio token into its waveform chunk.
pub trait ChunkSynth {
    fn sample_rate(&self) -> u32;
    fn synth(&mut self, code: &RvqCode) -> Result<Vec<f32>>;
}

/// Monotonic nanosecond time source.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

/// Simulated time, advanced explicitly; clones share the same counter.
#[derive(Debug, Clone, Default)]
pub struct SimClock(Arc<AtomicU64>);

impl SimClock {
    pub fn new(start_ns: u64) -> Self {
        Self(Arc::new(AtomicU64::new(start_ns)))
    }

    pub fn advance(&self, ns: u64) {
        self.0.fetch_add(ns, Ordering::SeqCst);
    }

    pub fn set(&self, ns: u64) {
        self.0.store(ns, Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now_ns(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Decoding state of one utterance.
#[derive(Debug, Clone)]
pub struct Session<'m> {
    model: &'m TtsModel,
    books: &'m CodebookSet,
    schedule: UnmaskSchedule,
    temperature: f64,
    cache: KvCache<f32>,
    pending: Option<Vec<f32>>,
    rng: ChaCha8Rng,
    consumed: usize,
    emitted: usize,
    closed: bool,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m TtsModel, books: &'m CodebookSet, seed: u64) -> Result<Self> {
        model.config().check_codebooks(books)?;
        Ok(Self {
            model,
            books,
            schedule: UnmaskSchedule::new(model.config().levels, model.config().steps)?,
            temperature: model.config().temperature,
            cache: KvCache::new(),
            pending: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            consumed: 0,
            emitted: 0,
            closed: false,
        })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature >= 0.0) {
            return Err(Error::InvalidConfig("temperature must be ≥ 0".into()));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn schedule(&self) -> &UnmaskSchedule {
        &self.schedule
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Decoder positions held in the cache.
    pub fn context_len(&self) -> usize {
        self.cache.len()
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Consumes one text token and returns its audio token with the unmasking trace.
    pub fn step_traced(&mut self, text: u32) -> Result<UnmaskTrace> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        let model = self.model;
        let g = Graph::inference();
        let p = model.params().bind(&g, false);
        let text_row = model.embed_text(&p, &[text])?;
        let x = match self.pending.take() {
            Some(prev) => {
                let audio = model.embed_audio(&p, Tensor::new(vec![1, prev.len()], prev)?);
                crate::nn::ops::concat_rows(&[audio, text_row])
            }
            None => text_row,
        };
        let rows = x.shape()[0];
        let h = model.decoder().forward_cached(&p, x, &mut self.cache)?;
        let hidden = h.slice_rows(rows - 1, rows).value();
        self.consumed += 1;
        let trace = iterative_unmask(
            model.head(),
            model.params(),
            &hidden,
            self.books,
            &self.schedule,
            self.temperature,
            &mut self.rng,
        )?;
        self.pending = Some(self.books.decode(&trace.code, self.books.levels())?);
        self.emitted += 1;
        debug_assert_eq!(self.consumed, self.emitted);
        Ok(trace)
    }
}

impl TokenGenerator for Session<'_> {
    fn step(&mut self, text: u32) -> Result<RvqCode> {
        Ok(self.step_traced(text)?.code)
    }
}

/// Streaming codec decoder as a [`ChunkSynth`].
#[derive(Debug, Clone)]
pub struct CodecStreamer<'m> {
    codec: &'m CodecModel,
    books: &'m CodebookSet,
    state: StreamState,
}

impl<'m> CodecStreamer<'m> {
    pub fn new(codec: &'m CodecModel, books: &'m CodebookSet) -> Result<Self> {
        let latent = codec.config().latent_dim();
        if books.dim() != latent || books.levels() != codec.config().levels || books.entries() != codec.config().entries {
            return Err(Error::ConfigMismatch(format!(
                "codebooks are L={} K={} D={}, codec expects L={} K={} D={latent}",
                books.levels(),
                books.entries(),
                books.dim(),
                codec.config().levels,
                codec.config().entries
            )));
        }
        Ok(Self {
            codec,
            books,
            state: StreamState::new(codec),
        })
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }
}

impl ChunkSynth for CodecStreamer<'_> {
    fn sample_rate(&self) -> u32 {
        self.codec.config().sample_rate
    }

    fn synth(&mut self, code: &RvqCode) -> Result<Vec<f32>> {
        self.codec.streaming_decode(&mut self.state, code, self.books)
    }
}

/// Output of [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub audio: AudioBuffer,
    pub codes: Vec<RvqCode>,
    pub events: Vec<TokenEvent>,
}

/// Steps `generator` once per text token and streams each code through
/// `synth`. The text event is stamped when the token is consumed; the audio
/// event once its chunk is ready, carrying the chunk's synthesis time.
pub fn synthesize(
    text: &[u32],
    generator: &mut impl TokenGenerator,
    synth: &mut impl ChunkSynth,
    clock: &impl Clock,
) -> Result<Synthesis> {
    let mut audio = Vec::new();
    let mut codes = Vec::with_capacity(text.len());
    let mut events = Vec::with_capacity(2 * text.len());
    for (i, &t) in text.iter().enumerate() {
        events.push(TokenEvent {
            kind: TokenKind::Text,
            index: i,
            timestamp_ns: clock.now_ns(),
            synth_ns: None,
        });
        let code = generator.step(t)?;
        let start = clock.now_ns();
        let chunk = synth.synth(&code)?;
        let end = clock.now_ns();
        audio.extend_from_slice(&chunk);
        codes.push(code);
        events.push(TokenEvent {
            kind: TokenKind::Audio,
            index: i,
            timestamp_ns: end,
            synth_ns: Some(end.saturating_sub(start)),
        });
    }
    Ok(Synthesis {
        audio: AudioBuffer::new(audio, synth.sample_rate())?,
        codes,
        events,
    })
}
