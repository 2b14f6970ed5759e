//! Residual vector quantization: greedy encode, cumulative decode, per-level
//! k-means codebook learning and the codebook file format.

mod file;
mod train;

pub use file::{read_codebooks, read_codebooks_from, write_codebooks, write_codebooks_to};
pub use train::{commitment_loss, train_codebooks, TrainReport, COMMITMENT_WEIGHT};

use crate::error::{Error, Result};

/// Quantizer depth of the full-size codec.
pub const REFERENCE_LEVELS: usize = 72;
/// Codewords per level at full size.
pub const REFERENCE_ENTRIES: usize = 1024;
/// Codeword dimensionality at full size (the codec latent width).
pub const REFERENCE_DIM: usize = 512;

/// `L × K × D` codewords, level 0 coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    levels: usize,
    entries: usize,
    dim: usize,
    codewords: Vec<f32>,
}

impl CodebookSet {
    pub fn new(levels: usize, entries: usize, dim: usize, codewords: Vec<f32>) -> Result<Self> {
        if levels == 0 || entries < 2 || dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "codebooks need L ≥ 1, K ≥ 2, D ≥ 1 (got L={levels}, K={entries}, D={dim})"
            )));
        }
        if codewords.len() != levels * entries * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} codeword values for {levels}×{entries}×{dim}",
                codewords.len()
            )));
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("non-finite codeword".into()));
        }
        Ok(Self {
            levels,
            entries,
            dim,
            codewords,
        })
    }

    /// Builds from nested `[level][entry][dim]` rows.
    pub fn from_levels(levels: &[Vec<Vec<f32>>]) -> Result<Self> {
        let l = levels.len();
        let k = levels.first().map_or(0, Vec::len);
        let d = levels.first().and_then(|lv| lv.first()).map_or(0, Vec::len);
        if levels.iter().any(|lv| lv.len() != k || lv.iter().any(|c| c.len() != d)) {
            return Err(Error::ShapeMismatch("ragged codebook levels".into()));
        }
        Self::new(l, k, d, levels.iter().flatten().flatten().copied().collect())
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codewords(&self) -> &[f32] {
        &self.codewords
    }

    pub fn codeword(&self, level: usize, index: usize) -> &[f32] {
        let start = (level * self.entries + index) * self.dim;
        &self.codewords[start..start + self.dim]
    }

    fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch(format!("vector has {} dims, codebooks {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("non-finite vector".into()));
        }
        Ok(())
    }

    /// Nearest codeword of `level` to `r`; ties go to the lowest index.
    pub fn nearest(&self, level: usize, r: &[f32]) -> usize {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.entries {
            let d = sq_dist(r, self.codeword(level, k));
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    /// Greedy residual encode over all levels.
    pub fn encode(&self, x: &[f32]) -> Result<RvqCode> {
        self.check_input(x)?;
        Ok(RvqCode {
            indices: self.encode_levels(x, 0),
        })
    }

    /// Greedy residual encode of `x` over levels `start..L`.
    pub fn encode_levels(&self, x: &[f32], start: usize) -> Vec<usize> {
        let mut r = x.to_vec();
        (start..self.levels)
            .map(|l| {
                let k = self.nearest(l, &r);
                for (rv, cv) in r.iter_mut().zip(self.codeword(l, k)) {
                    *rv -= cv;
                }
                k
            })
            .collect()
    }

    /// Encodes many frames, splitting the work across threads.
    pub fn encode_frames(&self, frames: &[Vec<f32>]) -> Result<Vec<RvqCode>> {
        for f in frames {
            self.check_input(f)?;
        }
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(frames.len().max(1));
        let chunk = frames.len().div_ceil(threads).max(1);
        let mut out = Vec::with_capacity(frames.len());
        std::thread::scope(|s| {
            let handles: Vec<_> = frames
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(|f| RvqCode { indices: self.encode_levels(f, 0) }).collect::<Vec<_>>()))
                .collect();
            for h in handles {
                out.extend(h.join().expect("encode worker panicked"));
            }
        });
        Ok(out)
    }

    /// `Σ_{l < up_to} c_{l, code[l]}`.
    pub fn decode(&self, code: &RvqCode, up_to: usize) -> Result<Vec<f32>> {
        if up_to == 0 || up_to > self.levels {
            return Err(Error::InvalidConfig(format!("decode depth {up_to} outside 1..={}", self.levels)));
        }
        self.validate(code)?;
        Ok(self.sum_levels(&code.indices[..up_to], 0))
    }

    /// Sum of codewords for `indices`, the first of which belongs to level `start`.
    pub fn sum_levels(&self, indices: &[usize], start: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; self.dim];
        for (i, &k) in indices.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(self.codeword(start + i, k)) {
                *o += c;
            }
        }
        out
    }

    pub fn validate(&self, code: &RvqCode) -> Result<()> {
        if code.indices.len() != self.levels {
            return Err(Error::CorruptCode(format!(
                "code has {} levels, codebooks {}",
                code.indices.len(),
                self.levels
            )));
        }
        if let Some((l, &k)) = code.indices.iter().enumerate().find(|&(_, &k)| k >= self.entries) {
            return Err(Error::CorruptCode(format!("index {k} at level {l} exceeds K={}", self.entries)));
        }
        Ok(())
    }

    /// Codebook whose every level is all zeros except entry 0; handy for tests.
    pub fn zeros(levels: usize, entries: usize, dim: usize) -> Result<Self> {
        Self::new(levels, entries, dim, vec![0.0; levels * entries * dim])
    }
}

pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// One index per level.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RvqCode {
    pub indices: Vec<usize>,
}

impl RvqCode {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn levels(&self) -> usize {
        self.indices.len()
    }
}

/// Number of committed (unmasked) levels during iterative decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskState {
    unmasked: usize,
    levels: usize,
}

impl MaskState {
    pub fn new(levels: usize) -> Self {
        Self { unmasked: 0, levels }
    }

    pub fn with_unmasked(levels: usize, unmasked: usize) -> Result<Self> {
        if unmasked > levels {
            return Err(Error::InvalidState(format!("{unmasked} unmasked of {levels} levels")));
        }
        Ok(Self { unmasked, levels })
    }

    pub fn unmasked(&self) -> usize {
        self.unmasked
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn is_complete(&self) -> bool {
        self.unmasked == self.levels
    }

    /// Commits levels up to `to`; the count never decreases.
    pub fn advance(&mut self, to: usize) -> Result<()> {
        if to < self.unmasked || to > self.levels {
            return Err(Error::InvalidState(format!(
                "cannot move from {} to {to} unmasked levels (of {})",
                self.unmasked, self.levels
            )));
        }
        self.unmasked = to;
        Ok(())
    }
}
