//! Toy-scale codec training on the mel reconstruction loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CodecModel, MelLoss};
use crate::dsp::{AudioBuffer, MelConfig};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, CosineSchedule, Graph, Tensor, Var};
use crate::rvq::{commitment_loss, train_codebooks, CodebookSet, TrainReport, COMMITMENT_WEIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecTrainConfig {
    pub steps: usize,
    pub batch: usize,
    /// Training crop length in samples (rounded up to whole latent frames).
    pub clip_samples: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup: usize,
    pub rvq_iterations: usize,
    /// Quantize latents with straight-through gradients once codebooks exist.
    pub straight_through: bool,
    pub commitment_weight: f64,
    /// Analysis settings of the reconstruction loss; the rate follows the model.
    pub loss_mel: MelConfig,
    pub seed: u64,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch: 4,
            clip_samples: 8192,
            lr: 3e-3,
            min_lr: 3e-4,
            warmup: 25,
            rvq_iterations: 20,
            straight_through: false,
            commitment_weight: COMMITMENT_WEIGHT,
            loss_mel: MelConfig::codec_loss_default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecTrainReport {
    /// Batch loss at every step.
    pub losses: Vec<f64>,
    /// Mean loss over the evaluation clips before and after training.
    pub initial_eval: f64,
    pub final_eval: f64,
    pub codebooks: TrainReport,
}

/// `count` tones with log-uniform pitch (110–1760 Hz), random amplitude and phase.
pub fn synthetic_tones(count: usize, len: usize, sample_rate: u32, seed: u64) -> Result<Vec<AudioBuffer>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let f = 110.0 * 16f64.powf(rng.random::<f64>());
            let amp = rng.random_range(0.1..0.6);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            AudioBuffer::tone(f, amp, phase, len, sample_rate)
        })
        .collect()
}

pub struct CodecTrainer {
    pub model: CodecModel,
    config: CodecTrainConfig,
    adam: Adam<f32>,
    schedule: CosineSchedule,
    loss: MelLoss,
    rng: ChaCha8Rng,
    books: Option<CodebookSet>,
    step: usize,
}

impl CodecTrainer {
    pub fn new(model: CodecModel, config: CodecTrainConfig) -> Result<Self> {
        if config.batch == 0 || config.clip_samples == 0 {
            return Err(Error::InvalidConfig("batch and clip length must be positive".into()));
        }
        let loss = MelLoss::new(MelConfig {
            sample_rate: model.config().sample_rate,
            ..config.loss_mel
        })?;
        let adam = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            model.params(),
        );
        let schedule = CosineSchedule {
            base_lr: config.lr,
            min_lr: config.min_lr,
            warmup: config.warmup,
            total: config.steps,
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            model,
            config,
            adam,
            schedule,
            loss,
            books: None,
            step: 0,
        })
    }

    /// Replaces the optimiser; moments restart from zero.
    pub fn with_optimizer(mut self, config: AdamConfig) -> Self {
        self.adam = Adam::new(config, self.model.params());
        self
    }

    pub fn set_codebooks(&mut self, books: CodebookSet) {
        self.books = Some(books);
    }

    fn clip_loss<'g>(&self, p: &crate::nn::Bound<'g, f32>, samples: &[f32]) -> Result<Var<'g, f32>> {
        let padded = self.model.padded(samples);
        let mut z = self.model.encode_graph(p, &padded);
        let mut extra = None;
        if let (true, Some(books)) = (self.config.straight_through, &self.books) {
            let frames: Vec<Vec<f32>> = (0..z.shape()[0]).map(|i| z.value().row(i).to_vec()).collect();
            let codes = books.encode_frames(&frames)?;
            let mut q = Vec::with_capacity(frames.len() * books.dim());
            for c in &codes {
                q.extend(books.decode(c, books.levels())?);
            }
            let (st, commit) = commitment_loss(z, &Tensor::new(z.shape(), q)?, self.config.commitment_weight)?;
            z = st;
            extra = Some(commit);
        }
        let y = self.model.decode_graph(p, z);
        let target = self.loss.target(&self.model.aligned_target(samples))?;
        let l = self.loss.forward(y, &target);
        Ok(match extra {
            Some(c) => l.add(c),
            None => l,
        })
    }

    fn crop(&mut self, clip: &AudioBuffer) -> Vec<f32> {
        let n = self.config.clip_samples.min(clip.len());
        let start = if clip.len() > n { self.rng.random_range(0..=clip.len() - n) } else { 0 };
        clip.samples()[start..start + n].to_vec()
    }

    /// One optimiser step on a random batch; returns the batch loss.
    pub fn step(&mut self, clips: &[AudioBuffer]) -> Result<f64> {
        if clips.is_empty() {
            return Err(Error::EmptyInput);
        }
        let batch: Vec<Vec<f32>> = (0..self.config.batch)
            .map(|_| {
                let i = self.rng.random_range(0..clips.len());
                self.crop(&clips[i])
            })
            .collect();
        let g = Graph::new();
        let p = self.model.params().bind(&g, true);
        let mut total: Option<Var<'_, f32>> = None;
        for b in &batch {
            let l = self.clip_loss(&p, b)?;
            total = Some(match total {
                Some(t) => t.add(l),
                None => l,
            });
        }
        let loss = total.expect("non-empty batch").scale(1.0 / batch.len() as f32);
        let value = loss.item() as f64;
        let grads = g.backward(loss)?;
        let grads = p.grads(&grads);
        let lr = self.schedule.lr(self.step);
        self.adam.step(self.model.params_mut(), &grads, lr);
        self.step += 1;
        Ok(value)
    }

    /// Mean loss over the start of each clip, without updating.
    pub fn evaluate(&self, clips: &[AudioBuffer]) -> Result<f64> {
        let g = Graph::inference();
        let p = self.model.params().bind(&g, false);
        let mut sum = 0.0;
        for c in clips {
            let n = self.config.clip_samples.min(c.len());
            sum += self.clip_loss(&p, &c.samples()[..n])?.item() as f64;
        }
        Ok(sum / clips.len() as f64)
    }

    /// Latent frames of every clip, for codebook fitting.
    pub fn latents(&self, clips: &[AudioBuffer]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::new();
        for c in clips {
            let z = self.model.encode(c)?;
            out.extend((0..z.len()).map(|i| z.frame(i).to_vec()));
        }
        Ok(out)
    }

    /// Trains for the configured steps, then fits codebooks on the latents.
    pub fn train(
        &mut self,
        clips: &[AudioBuffer],
        eval: &[AudioBuffer],
        mut on_step: impl FnMut(usize, f64),
    ) -> Result<(CodebookSet, CodecTrainReport)> {
        let initial_eval = self.evaluate(eval)?;
        let mut losses = Vec::with_capacity(self.config.steps);
        for s in 0..self.config.steps {
            let l = self.step(clips)?;
            on_step(s, l);
            losses.push(l);
        }
        let final_eval = self.evaluate(eval)?;
        let c = self.model.config();
        let (books, codebooks) = train_codebooks(
            &self.latents(clips)?,
            c.levels,
            c.entries,
            self.config.rvq_iterations,
            self.config.seed,
        )?;
        Ok((
            books,
            CodecTrainReport {
                losses,
                initial_eval,
                final_eval,
                codebooks,
            },
        ))
    }
}
