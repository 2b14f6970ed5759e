//! Mixture of diagonal Gaussians: the MLP head that parameterises it, its
//! negative log-likelihood, and sampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::graph::Var;
use super::layers::Linear;
use super::ops::concat_cols;
use super::params::{Bound, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Mixture count of the full-size head.
pub const REFERENCE_MIXTURES: usize = 1024;
/// Lower bound on per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MogHeadConfig {
    pub mixtures: usize,
    pub dim: usize,
    pub hidden: usize,
}

/// Weights (as logits), means and log-variances of a diagonal mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MoGParams {
    pub mixtures: usize,
    pub dim: usize,
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub log_vars: Vec<f64>,
}

impl MoGParams {
    pub fn new(mixtures: usize, dim: usize, logits: Vec<f64>, means: Vec<f64>, log_vars: Vec<f64>) -> Result<Self> {
        if logits.len() != mixtures || means.len() != mixtures * dim || log_vars.len() != mixtures * dim {
            return Err(Error::ShapeMismatch(format!(
                "mixture of {mixtures}×{dim} needs {mixtures} logits and {} means/log-variances",
                mixtures * dim
            )));
        }
        Ok(Self {
            mixtures,
            dim,
            logits,
            means,
            log_vars,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits, 1.0)
    }

    pub fn mean(&self, m: usize) -> &[f64] {
        &self.means[m * self.dim..(m + 1) * self.dim]
    }

    pub fn log_var(&self, m: usize) -> &[f64] {
        &self.log_vars[m * self.dim..(m + 1) * self.dim]
    }

    /// Most probable component.
    pub fn argmax(&self) -> usize {
        self.logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    /// Draws one sample. Temperature scales the logits and the variances;
    /// zero returns the mean of the most probable component.
    pub fn sample(&self, rng: &mut impl Rng, temperature: f64) -> Vec<f64> {
        if temperature <= 0.0 {
            return self.mean(self.argmax()).to_vec();
        }
        let probs = softmax(&self.logits, temperature);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let t_sqrt = temperature.sqrt();
        self.mean(pick)
            .iter()
            .zip(self.log_var(pick))
            .map(|(&mu, &lv)| {
                let eps: f64 = StandardNormal.sample(rng);
                mu + t_sqrt * (0.5 * lv).exp() * eps
            })
            .collect()
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// `−log Σ_m w_m N(target; μ_m, diag σ²_m)`, evaluated with log-sum-exp.
pub fn mog_nll(params: &MoGParams, target: &[f64]) -> Result<f64> {
    if target.len() != params.dim {
        return Err(Error::ShapeMismatch(format!(
            "target has {} dims, mixture has {}",
            target.len(),
            params.dim
        )));
    }
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !finite(&params.logits) || !finite(&params.means) || !finite(&params.log_vars) || !finite(target) {
        return Err(Error::InvalidSignal("mixture parameters or target are not finite".into()));
    }
    let max_logit = params.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max_logit + params.logits.iter().map(|l| (l - max_logit).exp()).sum::<f64>().ln();
    let terms: Vec<f64> = (0..params.mixtures)
        .map(|m| {
            let ll: f64 = params
                .mean(m)
                .iter()
                .zip(params.log_var(m))
                .zip(target)
                .map(|((&mu, &lv), &x)| -0.5 * ((x - mu).powi(2) * (-lv).exp() + lv + LN_2PI))
                .sum();
            params.logits[m] - log_norm + ll
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(-(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()))
}

/// Row-wise mixture NLL on the graph.
///
/// `logits: [N, M]`, `means` and `log_vars: [N, M·D]`, `targets: [N, D]`; returns `[N]`.
pub fn mog_nll_rows<'g, T: Real>(
    logits: Var<'g, T>,
    means: Var<'g, T>,
    log_vars: Var<'g, T>,
    targets: &Tensor<T>,
) -> Var<'g, T> {
    let graph = logits.graph();
    let (n, m) = (logits.value().rows(), logits.value().cols());
    let d = targets.cols();
    assert_eq!(targets.rows(), n, "one target row per mixture row");
    let mut tiled = Vec::with_capacity(n * m * d);
    for row in targets.data().chunks(d) {
        for _ in 0..m {
            tiled.extend_from_slice(row);
        }
    }
    let tiled = graph.constant(Tensor::new(vec![n, m * d], tiled).expect("tiled targets"));
    let diff = means.sub(tiled);
    let mahal = diff.square().mul(log_vars.neg().exp());
    let per_dim = mahal.add(log_vars).add_scalar(T::of(LN_2PI));
    let log_pdf = per_dim.reshape(&[n * m, d]).sum_rows().reshape(&[n, m]).scale(T::of(-0.5));
    let log_w = logits.add_col(logits.logsumexp_rows().neg());
    log_w.add(log_pdf).logsumexp_rows().neg()
}

/// Three-layer MLP mapping `[hidden ‖ embedding]` to mixture parameters.
#[derive(Debug, Clone)]
pub struct MogHead {
    config: MogHeadConfig,
    layers: [Linear; 3],
}

/// Mixture parameters on the graph, one row per query.
#[derive(Debug, Clone, Copy)]
pub struct MogOutput<'g, T: Real> {
    pub logits: Var<'g, T>,
    pub means: Var<'g, T>,
    pub log_vars: Var<'g, T>,
}

impl<'g, T: Real> MogOutput<'g, T> {
    pub fn nll(&self, targets: &Tensor<T>) -> Var<'g, T> {
        mog_nll_rows(self.logits, self.means, self.log_vars, targets)
    }

    /// Extracts the mixture for row `row`.
    pub fn params(&self, row: usize, config: &MogHeadConfig) -> MoGParams {
        let (m, d) = (config.mixtures, config.dim);
        let take = |v: &Var<'g, T>, w: usize| -> Vec<f64> {
            v.value().data()[row * w..(row + 1) * w].iter().map(|x| x.f64()).collect()
        };
        MoGParams {
            mixtures: m,
            dim: d,
            logits: take(&self.logits, m),
            means: take(&self.means, m * d),
            log_vars: take(&self.log_vars, m * d),
        }
    }
}

impl MogHead {
    pub fn new<T: Real>(
        config: MogHeadConfig,
        context_width: usize,
        store: &mut ParamStore<T>,
        name: &str,
        rng: &mut impl Rng,
    ) -> Self {
        let out = config.mixtures * (1 + 2 * config.dim);
        let input = context_width + config.dim;
        let layers = [
            Linear::new(store, &format!("{name}.fc0"), input, config.hidden, true, rng),
            Linear::new(store, &format!("{name}.fc1"), config.hidden, config.hidden, true, rng),
            Linear::new(store, &format!("{name}.fc2"), config.hidden, out, true, rng),
        ];
        Self { config, layers }
    }

    pub fn config(&self) -> &MogHeadConfig {
        &self.config
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    /// `hidden: [N, context]`, `embedding: [N, D]`.
    pub fn forward<'g, T: Real>(
        &self,
        p: &Bound<'g, T>,
        hidden: Var<'g, T>,
        embedding: Var<'g, T>,
    ) -> Result<MogOutput<'g, T>> {
        let (hs, es) = (hidden.shape(), embedding.shape());
        if hs.len() != 2 || es.len() != 2 || hs[0] != es[0] || hs[1] + es[1] != self.input_width() || es[1] != self.config.dim {
            return Err(Error::ShapeMismatch(format!(
                "head expects [N, {}] ‖ [N, {}], got {hs:?} ‖ {es:?}",
                self.input_width() - self.config.dim,
                self.config.dim
            )));
        }
        let x = concat_cols(&[hidden, embedding]);
        let x = self.layers[0].forward(p, x).gelu();
        let x = self.layers[1].forward(p, x).gelu();
        let out = self.layers[2].forward(p, x);
        let (m, d) = (self.config.mixtures, self.config.dim);
        let floor = T::of(VARIANCE_FLOOR.ln());
        Ok(MogOutput {
            logits: out.slice_cols(0, m),
            means: out.slice_cols(m, m + m * d),
            log_vars: out.slice_cols(m + m * d, m + 2 * m * d).clamp(floor, T::infinity()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_at_mean() {
        let p = MoGParams::new(1, 1, vec![0.0], vec![0.0], vec![0.0]).unwrap();
        let nll = mog_nll(&p, &[0.0]).unwrap();
        assert!((nll - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((nll - 0.9189).abs() < 1e-4);
    }

    #[test]
    fn duplicated_components_leave_nll_unchanged() {
        let one = MoGParams::new(1, 2, vec![0.3], vec![0.5, -1.0], vec![0.1, -0.2]).unwrap();
        let two = MoGParams::new(2, 2, vec![0.7, 0.7], vec![0.5, -1.0, 0.5, -1.0], vec![0.1, -0.2, 0.1, -0.2]).unwrap();
        let x = [0.5, -1.0];
        assert!((mog_nll(&one, &x).unwrap() - mog_nll(&two, &x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn non_finite_parameters_are_rejected() {
        let p = MoGParams::new(1, 1, vec![f64::NAN], vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(mog_nll(&p, &[0.0]), Err(Error::InvalidSignal(_))));
        assert!(MoGParams::new(2, 2, vec![0.0], vec![], vec![]).is_err());
    }

    #[test]
    fn floor_bound_in_closed_form() {
        let d = 6;
        let target: Vec<f64> = (0..d).map(|i| i as f64 * 0.3).collect();
        let p = MoGParams::new(1, d, vec![0.0], target.clone(), vec![VARIANCE_FLOOR.ln(); d]).unwrap();
        let bound = 0.5 * d as f64 * (LN_2PI + VARIANCE_FLOOR.ln());
        assert!((mog_nll(&p, &target).unwrap() - bound).abs() < 1e-12);
    }

    #[test]
    fn graph_nll_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, m, d) = (3, 4, 5);
        let r = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let logits = r(&mut rng, n * m);
        let means = r(&mut rng, n * m * d);
        let lv = r(&mut rng, n * m * d);
        let targets = r(&mut rng, n * d);
        let g = Graph::<f64>::inference();
        let out = mog_nll_rows(
            g.constant(Tensor::new(vec![n, m], logits.clone()).unwrap()),
            g.constant(Tensor::new(vec![n, m * d], means.clone()).unwrap()),
            g.constant(Tensor::new(vec![n, m * d], lv.clone()).unwrap()),
            &Tensor::new(vec![n, d], targets.clone()).unwrap(),
        );
        for row in 0..n {
            let p = MoGParams::new(
                m,
                d,
                logits[row * m..(row + 1) * m].to_vec(),
                means[row * m * d..(row + 1) * m * d].to_vec(),
                lv[row * m * d..(row + 1) * m * d].to_vec(),
            )
            .unwrap();
            let want = mog_nll(&p, &targets[row * d..(row + 1) * d]).unwrap();
            assert!((out.value().data()[row] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn head_weights_sum_to_one_and_bias_only_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = MogHeadConfig {
            mixtures: 3,
            dim: 2,
            hidden: 8,
        };
        let mut store = ParamStore::<f64>::new();
        let head = MogHead::new(cfg, 4, &mut store, "head", &mut rng);
        let g = Graph::inference();
        let p = store.bind(&g, false);
        let h = g.constant(Tensor::from_fn(&[1, 4], |i| i as f64 - 1.5));
        let e = g.constant(Tensor::from_fn(&[1, 2], |i| 0.3 * i as f64));
        let params = head.forward(&p, h, e).unwrap().params(0, &cfg);
        assert!((params.weights().iter().sum::<f64>() - 1.0).abs() < 1e-6);

        // zero every weight matrix; the output is then the last bias, with the variance floor applied
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).ends_with(".weight") {
                let shape = store.get(id).shape().to_vec();
                store.set(id, Tensor::zeros(&shape)).unwrap();
            }
        }
        let out_bias: Vec<f64> = (0..15).map(|i| if i >= 9 { -20.0 + i as f64 } else { 0.1 * i as f64 }).collect();
        let bias_id = store.id("head.fc2.bias").unwrap();
        store.set(bias_id, Tensor::new(vec![15], out_bias.clone()).unwrap()).unwrap();
        let g = Graph::inference();
        let p = store.bind(&g, false);
        let params = head
            .forward(&p, g.constant(Tensor::from_fn(&[1, 4], |i| i as f64)), g.constant(Tensor::zeros(&[1, 2])))
            .unwrap()
            .params(0, &cfg);
        assert_eq!(params.logits, out_bias[..3].to_vec());
        assert_eq!(params.means, out_bias[3..9].to_vec());
        let floor = VARIANCE_FLOOR.ln();
        let want: Vec<f64> = out_bias[9..].iter().map(|&v| v.max(floor)).collect();
        assert_eq!(params.log_vars, want);
    }

    #[test]
    fn zero_temperature_returns_argmax_mean() {
        let p = MoGParams::new(2, 2, vec![0.1, 2.0], vec![1.0, 1.0, -3.0, 4.0], vec![0.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample(&mut rng, 0.0), vec![-3.0, 4.0]);
    }

    #[test]
    fn sampling_matches_component_statistics() {
        let p = MoGParams::new(1, 1, vec![0.0], vec![2.0], vec![(0.25f64).ln()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..20_000).map(|_| p.sample(&mut rng, 1.0)[0]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0).abs() < 0.02);
        assert!((var - 0.25).abs() < 0.02);
    }

    #[test]
    fn reference_mixture_count() {
        assert_eq!(REFERENCE_MIXTURES, 1024);
    }
}
