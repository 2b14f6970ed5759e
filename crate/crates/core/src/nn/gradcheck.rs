//! Central finite-difference check of reverse-mode gradients.

use rand::Rng;
use rand::seq::index::sample;

use super::graph::{Graph, Var};
use super::params::{Bound, ParamStore};
use crate::error::{Error, Result};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor, so that gradients that are both ~0 do not divide by zero.
pub const REL_FLOOR: f64 = 1e-7;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// Compares backprop gradients of a scalar loss with central differences on
/// `samples` randomly chosen parameter scalars (all of them if fewer exist).
pub fn check_gradients<F>(
    store: &ParamStore<f64>,
    samples: usize,
    rng: &mut impl Rng,
    loss: F,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&Bound<'g, f64>) -> Result<Var<'g, f64>>,
{
    let graph = Graph::new();
    let bound = store.bind(&graph, true);
    let value = loss(&bound)?;
    let grads = graph.backward(value)?;
    let analytic = bound.grads(&grads);

    let offsets: Vec<usize> = store
        .ids()
        .scan(0, |acc, id| {
            let start = *acc;
            *acc += store.get(id).len();
            Some(start)
        })
        .collect();
    let total = store.scalar_count();
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    let mut picks = sample(rng, total, samples.min(total)).into_vec();
    picks.sort_unstable();

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let g = Graph::inference();
        let b = s.bind(&g, false);
        Ok(loss(&b)?.item())
    };
    let ids: Vec<_> = store.ids().collect();
    let mut probe = store.clone();
    let mut entries = Vec::with_capacity(picks.len());
    for flat in picks {
        let slot = offsets.partition_point(|&o| o <= flat) - 1;
        let (id, index) = (ids[slot], flat - offsets[slot]);
        let original = store.get(id).data()[index];
        probe.get_mut(id).data_mut()[index] = original + FD_STEP;
        let plus = eval(&probe)?;
        probe.get_mut(id).data_mut()[index] = original - FD_STEP;
        let minus = eval(&probe)?;
        probe.get_mut(id).data_mut()[index] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[slot].data()[index];
        entries.push(GradCheckEntry {
            param: store.name(id).to_string(),
            index,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        });
    }
    Ok(GradCheckReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn detects_a_wrong_backward() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = check_gradients(&store, 3, &mut rng, |p| {
            let x = p.get(id);
            let g = p.graph();
            // claims d(x²)/dx = x instead of 2x
            let sq = g.op(x.value().map(|v| v * v), &[x], |inputs, _, grad| {
                vec![Some(inputs[0].zip_map(grad, |a, b| a * b))]
            });
            Ok(sq.sum())
        })
        .unwrap();
        assert!((report.max_rel_error() - 0.5).abs() < 1e-6);
        let good = check_gradients(&store, 3, &mut rng, |p| Ok(p.get(id).square().sum())).unwrap();
        assert!(good.max_rel_error() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.001) - 0.001 / 1.001).abs() < 1e-15);
    }
}
