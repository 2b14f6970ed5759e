//! Decoder-only transformer: pre-norm blocks, causal self-attention with
//! rotary position embeddings, GELU feed-forward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Var;
use super::layers::{LayerNorm, Linear};
use super::ops::concat_cols;
use super::ops::concat_rows;
use super::params::{Bound, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub ff_width: usize,
    pub max_len: usize,
    pub rope_base: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            heads: 4,
            width: 128,
            ff_width: 512,
            max_len: 1024,
            rope_base: 10_000.0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "width {} not divisible by {} heads",
                self.width, self.heads
            )));
        }
        if (self.width / self.heads) % 2 != 0 {
            return Err(Error::InvalidConfig("head dimension must be even for rotary embeddings".into()));
        }
        if self.layers == 0 || self.max_len == 0 {
            return Err(Error::InvalidConfig("decoder needs at least one layer and position".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }
}

#[derive(Debug, Clone)]
struct Block {
    attn_norm: LayerNorm,
    qkv: Linear,
    proj: Linear,
    ff_norm: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

/// Keys and values of previously processed positions, per layer.
#[derive(Debug, Clone, Default)]
pub struct KvCache<T: Real = f32> {
    layers: Vec<(Tensor<T>, Tensor<T>)>,
    len: usize,
}

impl<T: Real> KvCache<T> {
    pub fn new() -> Self {
        Self {
            layers: Vec::new(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone)]
pub struct TransformerDecoder {
    config: DecoderConfig,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
}

impl TransformerDecoder {
    pub fn new<T: Real>(config: DecoderConfig, store: &mut ParamStore<T>, name: &str, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let blocks = (0..config.layers)
            .map(|l| {
                let n = format!("{name}.layer{l}");
                Block {
                    attn_norm: LayerNorm::new(store, &format!("{n}.attn_norm"), w),
                    qkv: Linear::new(store, &format!("{n}.qkv"), w, 3 * w, true, rng),
                    proj: Linear::new(store, &format!("{n}.proj"), w, w, true, rng),
                    ff_norm: LayerNorm::new(store, &format!("{n}.ff_norm"), w),
                    ff_in: Linear::new(store, &format!("{n}.ff_in"), w, config.ff_width, true, rng),
                    ff_out: Linear::new(store, &format!("{n}.ff_out"), config.ff_width, w, true, rng),
                }
            })
            .collect();
        Ok(Self {
            config,
            blocks,
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), w),
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    /// Full-sequence forward pass over embedded inputs `[T, width]`.
    pub fn forward<'g, T: Real>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        self.run(p, x, None)
    }

    /// Forward pass over new positions appended after those held in `cache`.
    pub fn forward_cached<'g, T: Real>(
        &self,
        p: &Bound<'g, T>,
        x: Var<'g, T>,
        cache: &mut KvCache<T>,
    ) -> Result<Var<'g, T>> {
        self.run(p, x, Some(cache))
    }

    fn run<'g, T: Real>(
        &self,
        p: &Bound<'g, T>,
        mut x: Var<'g, T>,
        mut cache: Option<&mut KvCache<T>>,
    ) -> Result<Var<'g, T>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.config.width {
            return Err(Error::ShapeMismatch(format!(
                "decoder expects [T, {}], got {shape:?}",
                self.config.width
            )));
        }
        let new = shape[0];
        let offset = cache.as_ref().map_or(0, |c| c.len);
        if offset + new > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: offset + new,
                max: self.config.max_len,
            });
        }
        let graph = p.graph();
        let w = self.config.width;
        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let scale = T::of(1.0 / (hd as f64).sqrt());
        for (l, block) in self.blocks.iter().enumerate() {
            let h = block.attn_norm.forward(p, x);
            let qkv = block.qkv.forward(p, h);
            let q = qkv.slice_cols(0, w).rope(heads, offset, self.config.rope_base);
            let mut k = qkv.slice_cols(w, 2 * w).rope(heads, offset, self.config.rope_base);
            let mut v = qkv.slice_cols(2 * w, 3 * w);
            if let Some(c) = cache.as_deref_mut() {
                if let Some((ck, cv)) = c.layers.get(l) {
                    if c.len > 0 {
                        k = concat_rows(&[graph.constant(ck.clone()), k]);
                        v = concat_rows(&[graph.constant(cv.clone()), v]);
                    }
                }
                let entry = ((*k.value()).clone(), (*v.value()).clone());
                if l < c.layers.len() {
                    c.layers[l] = entry;
                } else {
                    c.layers.push(entry);
                }
            }
            let mut per_head = Vec::with_capacity(heads);
            for head in 0..heads {
                let (a, b) = (head * hd, (head + 1) * hd);
                let scores = q.slice_cols(a, b).matmul_nt(k.slice_cols(a, b)).scale(scale);
                let att = scores.causal_softmax(offset);
                per_head.push(att.matmul(v.slice_cols(a, b)));
            }
            let attended = if heads == 1 { per_head[0] } else { concat_cols(&per_head) };
            x = x.add(block.proj.forward(p, attended));
            let f = block.ff_norm.forward(p, x);
            let f = block.ff_out.forward(p, block.ff_in.forward(p, f).gelu());
            x = x.add(f);
        }
        if let Some(c) = cache {
            c.len = offset + new;
        }
        Ok(self.final_norm.forward(p, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;
    use crate::nn::ops::gelu_scalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> DecoderConfig {
        DecoderConfig {
            layers: 2,
            heads: 2,
            width: 8,
            ff_width: 16,
            max_len: 32,
            rope_base: 10_000.0,
        }
    }

    fn build(seed: u64) -> (TransformerDecoder, ParamStore<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dec = TransformerDecoder::new(tiny(), &mut store, "dec", &mut rng).unwrap();
        // non-trivial norms and biases so the oracle exercises them
        for id in store.ids().collect::<Vec<_>>() {
            let t = store.get_mut(id);
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v += 0.05 * ((i as f64) * 0.7 + seed as f64).sin();
            }
        }
        (dec, store)
    }

    fn inputs(t: usize, seed: u64) -> Tensor<f64> {
        Tensor::from_fn(&[t, 8], |i| ((i as f64 + 1.0) * 0.37 + seed as f64).sin())
    }

    fn run(dec: &TransformerDecoder, store: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let g = Graph::inference();
        let p = store.bind(&g, false);
        let y = dec.forward(&p, g.constant(x.clone())).unwrap();
        (*y.value()).clone()
    }

    #[test]
    fn causal_mask_makes_prefix_independent_of_suffix() {
        let (dec, store) = build(1);
        for len in 1..=16 {
            let x = inputs(len, 3);
            let base = run(&dec, &store, &x);
            for cut in 0..len {
                let mut y = x.clone();
                for v in &mut y.data_mut()[cut * 8..] {
                    *v += 0.5;
                }
                let out = run(&dec, &store, &y);
                assert_eq!(&out.data()[..cut * 8], &base.data()[..cut * 8], "len {len} cut {cut}");
            }
        }
    }

    #[test]
    fn cached_steps_match_full_forward() {
        let (dec, store) = build(2);
        let x = inputs(9, 5);
        let full = run(&dec, &store, &x);
        let mut cache = KvCache::new();
        let mut rows = Vec::new();
        for chunk in [0..1, 1..4, 4..5, 5..9] {
            let g = Graph::inference();
            let p = store.bind(&g, false);
            let part = Tensor::new(vec![chunk.len(), 8], x.data()[chunk.start * 8..chunk.end * 8].to_vec()).unwrap();
            let y = dec.forward_cached(&p, g.constant(part), &mut cache).unwrap();
            rows.extend_from_slice(y.value().data());
        }
        let stepped = Tensor::new(vec![9, 8], rows).unwrap();
        assert!(stepped.max_abs_diff(&full) < 1e-12);
        assert_eq!(cache.len(), 9);
    }

    #[test]
    fn overlong_sequences_are_rejected() {
        let (dec, store) = build(3);
        let g = Graph::inference();
        let p = store.bind(&g, false);
        let err = dec.forward(&p, g.constant(inputs(33, 0))).unwrap_err();
        assert!(matches!(err, Error::SequenceTooLong { len: 33, max: 32 }));
    }

    #[test]
    fn single_position_matches_hand_evaluation() {
        // With one position attention is the identity on v, and rotary at position 0 is the identity.
        let (dec, store) = build(4);
        let x = inputs(1, 7);
        let got = run(&dec, &store, &x);
        let get = |name: &str| store.get(store.id(name).unwrap()).data().to_vec();
        let ln = |v: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            v.iter()
                .zip(g.iter().zip(b))
                .map(|(a, (gg, bb))| (a - mean) / (var + 1e-5).sqrt() * gg + bb)
                .collect()
        };
        let lin = |v: &[f64], w: &[f64], b: &[f64], out: usize| -> Vec<f64> {
            (0..out)
                .map(|j| b[j] + v.iter().enumerate().map(|(i, a)| a * w[i * out + j]).sum::<f64>())
                .collect()
        };
        let mut h = x.data().to_vec();
        for l in 0..2 {
            let n = |s: &str| format!("dec.layer{l}.{s}");
            let a = ln(&h, &get(&n("attn_norm.gain")), &get(&n("attn_norm.shift")));
            let qkv = lin(&a, &get(&n("qkv.weight")), &get(&n("qkv.bias")), 24);
            let v = &qkv[16..24];
            let o = lin(v, &get(&n("proj.weight")), &get(&n("proj.bias")), 8);
            h = h.iter().zip(&o).map(|(p, q)| p + q).collect();
            let f = ln(&h, &get(&n("ff_norm.gain")), &get(&n("ff_norm.shift")));
            let f: Vec<f64> = lin(&f, &get(&n("ff_in.weight")), &get(&n("ff_in.bias")), 16)
                .into_iter()
                .map(gelu_scalar)
                .collect();
            let f = lin(&f, &get(&n("ff_out.weight")), &get(&n("ff_out.bias")), 8);
            h = h.iter().zip(&f).map(|(p, q)| p + q).collect();
        }
        let want = ln(&h, &get("dec.final_norm.gain"), &get("dec.final_norm.shift"));
        for (a, b) in got.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_sequences_give_identical_outputs() {
        let (dec, store) = build(5);
        let x = inputs(6, 2);
        assert_eq!(run(&dec, &store, &x), run(&dec, &store, &x));
    }
}
