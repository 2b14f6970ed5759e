//! Frame-by-frame decoding with carried convolution and overlap-add state.

use super::CodecModel;
use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor};
use crate::rvq::{CodebookSet, RvqCode};

/// Left context of every decoder convolution plus the overlap-add tail.
#[derive(Debug, Clone)]
pub struct StreamState {
    histories: Vec<Tensor<f32>>,
    tail: Vec<f64>,
    emitted: usize,
    fingerprint: (usize, usize, usize),
}

impl StreamState {
    pub fn new(model: &CodecModel) -> Self {
        Self {
            histories: model.decoder_histories(),
            tail: vec![0.0; model.config().latency_samples()],
            emitted: 0,
            fingerprint: fingerprint(model),
        }
    }

    /// Latent frames decoded so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Buffered rows per convolution, in decoder order.
    pub fn history_lengths(&self) -> Vec<usize> {
        self.histories.iter().map(Tensor::rows).collect()
    }

    pub fn tail_len(&self) -> usize {
        self.tail.len()
    }
}

fn fingerprint(model: &CodecModel) -> (usize, usize, usize) {
    let c = model.config();
    (c.compression(), c.latent_dim(), model.params().scalar_count())
}

impl CodecModel {
    /// Decodes one latent frame `[D]`, returning exactly `compression` samples.
    pub fn stream_latent(&self, state: &mut StreamState, latent: &[f32]) -> Result<Vec<f32>> {
        if state.fingerprint != fingerprint(self) || state.histories.len() != self.decoder_histories().len() {
            return Err(Error::InvalidState("stream state belongs to a different codec".into()));
        }
        self.check_latents(latent.len())?;
        let g = Graph::inference();
        let p = self.params().bind(&g, false);
        let z = g.constant(Tensor::new(vec![1, latent.len()], latent.to_vec())?);
        let spectra = self.decode_spectra(&p, z, Some(&mut state.histories));
        let bins = self.config().bins();
        let spec: Vec<rustfft::num_complex::Complex64> = spectra
            .value()
            .data()
            .chunks(2 * bins)
            .flat_map(|r| (0..bins).map(move |k| rustfft::num_complex::Complex64::new(r[k] as f64, r[bins + k] as f64)))
            .collect();
        let n = self.config().compression();
        let lag = state.tail.len();
        let time = self.kernel().frames_to_time(&spec);
        let mut out = self.kernel().overlap_add(&time, -(lag as isize), n + lag);
        for (o, t) in out.iter_mut().zip(&state.tail) {
            *o += t;
        }
        state.tail.copy_from_slice(&out[n..]);
        state.emitted += 1;
        let gain = self.synthesis_gain();
        Ok(out[..n].iter().map(|&v| (v * gain) as f32).collect())
    }

    /// Decodes the next code of a stream.
    pub fn streaming_decode(&self, state: &mut StreamState, code: &RvqCode, books: &CodebookSet) -> Result<Vec<f32>> {
        self.check_latents(books.dim())?;
        let emb = books.decode(code, books.levels())?;
        self.stream_latent(state, &emb)
    }
}
