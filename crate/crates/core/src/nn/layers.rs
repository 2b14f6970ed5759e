//! Small building blocks shared by the codec and the TTS decoder.

use rand::Rng;

use super::graph::Var;
use super::params::{Bound, ParamId, ParamStore};
use crate::real::Real;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let std = (1.0 / input as f64).sqrt();
        let weight = store.add_normal(format!("{name}.weight"), &[input, output], std, rng);
        let bias = bias.then(|| store.add_zeros(format!("{name}.bias"), &[output]));
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward<'g, T: Real>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Var<'g, T> {
        let y = x.matmul(p.get(self.weight));
        match self.bias {
            Some(b) => y.add_row(p.get(b)),
            None => y,
        }
    }
}

/// Layer normalisation over the last axis with learned gain and shift.
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, width: usize) -> Self {
        Self {
            gain: store.add_full(format!("{name}.gain"), &[width], 1.0),
            shift: store.add_zeros(format!("{name}.shift"), &[width]),
        }
    }

    pub fn forward<'g, T: Real>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Var<'g, T> {
        x.layer_norm(T::of(LAYER_NORM_EPS))
            .mul_row(p.get(self.gain))
            .add_row(p.get(self.shift))
    }
}
