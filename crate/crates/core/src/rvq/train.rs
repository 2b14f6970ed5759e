//! Level-by-level k-means codebook learning.

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CodebookSet;
use crate::error::{Error, Result};
use crate::nn::{Tensor, Var};
use crate::real::Real;

/// Weight of the commitment term in straight-through training.
pub const COMMITMENT_WEIGHT: f64 = 0.25;

/// Per-level quantization MSE after each assignment step, and the residual
/// MSE left after each level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub level_mse: Vec<Vec<f64>>,
    pub residual_mse: Vec<f64>,
}

/// Learns `levels` codebooks of `entries` codewords each from `samples`.
pub fn train_codebooks(
    samples: &[Vec<f32>],
    levels: usize,
    entries: usize,
    iterations: usize,
    seed: u64,
) -> Result<(CodebookSet, TrainReport)> {
    if levels == 0 || entries < 2 || iterations == 0 {
        return Err(Error::InvalidConfig(format!(
            "need L ≥ 1, K ≥ 2 and ≥ 1 iteration (got {levels}, {entries}, {iterations})"
        )));
    }
    if samples.len() < entries {
        return Err(Error::InsufficientData(format!("{} samples for K={entries}", samples.len())));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::ShapeMismatch("samples must share a non-zero dimension".into()));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSignal("non-finite training sample".into()));
    }

    let mut residuals: Vec<f32> = samples.iter().flatten().copied().collect();
    let mut codewords = Vec::with_capacity(levels * entries * dim);
    let mut report = TrainReport {
        level_mse: Vec::with_capacity(levels),
        residual_mse: Vec::with_capacity(levels),
    };
    for level in 0..levels {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let points: Vec<f64> = residuals.iter().map(|&v| v as f64).collect();
        let (centers, history) = kmeans(&points, dim, entries, iterations, &mut rng);
        let mut words: Vec<f32> = centers.iter().map(|&v| v as f32).collect();
        dedupe(&mut words, dim);
        report.level_mse.push(history);

        let single = CodebookSet::new(1, entries, dim, words.clone())?;
        let mut total = 0.0;
        for r in residuals.chunks_mut(dim) {
            let k = single.nearest(0, r);
            for (rv, cv) in r.iter_mut().zip(single.codeword(0, k)) {
                *rv -= cv;
                total += (*rv as f64).powi(2);
            }
        }
        report.residual_mse.push(total / residuals.len() as f64);
        codewords.extend(words);
    }
    Ok((CodebookSet::new(levels, entries, dim, codewords)?, report))
}

fn kmeans(points: &[f64], dim: usize, k: usize, iterations: usize, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    // k-means++ seeding
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(point(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(point(i), &centers[..dim])).collect();
    for _ in 1..k {
        let pick = match WeightedIndex::new(&nearest) {
            Ok(w) => w.sample(rng),
            Err(_) => rng.random_range(0..n),
        };
        let c = point(pick).to_vec();
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist(point(i), &c));
        }
        centers.extend(c);
    }

    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut assign = assign(points, &centers, dim);
        history.push(assign.iter().map(|a| a.1).sum::<f64>() / points.len() as f64);
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, p) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += p;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centers[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // dead codeword: move it onto the worst-served point
                let (far, _) = assign
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |best, (i, a)| if a.1 > best.1 { (i, a.1) } else { best });
                centers[c * dim..(c + 1) * dim].copy_from_slice(point(far));
                assign[far] = (c, 0.0);
            }
        }
    }
    (centers, history)
}

/// Nearest center and squared distance per point, lowest index on ties.
fn assign(points: &[f64], centers: &[f64], dim: usize) -> Vec<(usize, f64)> {
    let n = points.len() / dim;
    let work = |range: std::ops::Range<usize>| -> Vec<(usize, f64)> {
        range
            .map(|i| {
                let p = &points[i * dim..(i + 1) * dim];
                let mut best = (0, f64::INFINITY);
                for (c, center) in centers.chunks(dim).enumerate() {
                    let d: f64 = p.iter().zip(center).map(|(x, y)| (x - y) * (x - y)).sum();
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best
            })
            .collect()
    };
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    if threads == 1 || n * centers.len() < 1 << 16 {
        return work(0..n);
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| s.spawn(move || work(start..(start + chunk).min(n))))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("assign worker panicked")).collect()
    })
}

/// Nudges later duplicates of a codeword so every entry in a level is distinct.
fn dedupe(words: &mut [f32], dim: usize) {
    let k = words.len() / dim;
    let scale = 1e-4 * (1.0 + words.iter().fold(0.0f32, |m, v| m.max(v.abs())));
    for i in 1..k {
        let mut bump = 1.0;
        while (0..i).any(|j| words[j * dim..(j + 1) * dim] == words[i * dim..(i + 1) * dim]) {
            words[i * dim + i % dim] += scale * bump;
            bump += 1.0;
        }
    }
}

/// Straight-through quantization with a commitment penalty.
///
/// Returns `z + sg(q − z)` (forward value `q`, identity gradient to `z`) and
/// `weight · mean((z − sg(q))²)`; [`COMMITMENT_WEIGHT`] is the default weight.
pub fn commitment_loss<'g, T: Real>(
    z: Var<'g, T>,
    quantized: &Tensor<T>,
    weight: f64,
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    if z.shape() != quantized.shape() {
        return Err(Error::ShapeMismatch(format!(
            "latents {:?} vs quantized {:?}",
            z.shape(),
            quantized.shape()
        )));
    }
    let g = z.graph();
    let delta = quantized.zip_map(&z.value(), |q, v| q - v);
    let passthrough = z.add(g.constant(delta));
    let commit = z.sub(g.constant(quantized.clone())).square().mean().scale(T::of(weight));
    Ok((passthrough, commit))
}
