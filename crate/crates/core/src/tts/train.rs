//! Teacher-forced training of the TTS model.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TtsModel, UnmaskSchedule};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, CosineSchedule, Graph, Var};
use crate::rvq::{CodebookSet, RvqCode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for TtsTrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 5e-3,
            min_lr: 3e-4,
            warmup: 10,
            seed: 0,
        }
    }
}

/// A text sequence with one ground-truth audio token per text token.
pub type TrainingPair = (Vec<u32>, Vec<RvqCode>);

pub struct TtsTrainer<'b> {
    pub model: TtsModel,
    books: &'b CodebookSet,
    unmask: UnmaskSchedule,
    adam: Adam<f32>,
    schedule: CosineSchedule,
    rng: ChaCha8Rng,
    step: usize,
}

impl<'b> TtsTrainer<'b> {
    pub fn new(model: TtsModel, books: &'b CodebookSet, config: &TtsTrainConfig) -> Result<Self> {
        model.config().check_codebooks(books)?;
        let adam = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            model.params(),
        );
        Ok(Self {
            unmask: UnmaskSchedule::new(model.config().levels, model.config().steps)?,
            model,
            books,
            adam,
            schedule: CosineSchedule {
                base_lr: config.lr,
                min_lr: config.min_lr,
                warmup: config.warmup,
                total: config.steps,
            },
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            step: 0,
        })
    }

    /// Replaces the optimiser; moments restart from zero.
    pub fn with_optimizer(mut self, config: AdamConfig) -> Self {
        self.adam = Adam::new(config, self.model.params());
        self
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One update on the mean loss over `pairs`, each position conditioned on
    /// an unmask state drawn from the schedule's group starts.
    pub fn step(&mut self, pairs: &[TrainingPair]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let starts = self.unmask.group_starts();
        let g = Graph::new();
        let p = self.model.params().bind(&g, true);
        let mut total: Option<Var<'_, f32>> = None;
        for (text, codes) in pairs {
            let u: Vec<usize> = (0..codes.len())
                .map(|_| *starts.choose(&mut self.rng).expect("non-empty schedule"))
                .collect();
            let l = self.model.teacher_forced_loss_graph(&p, text, codes, self.books, &u)?;
            total = Some(match total {
                Some(t) => t.add(l),
                None => l,
            });
        }
        let loss = total.expect("non-empty batch").scale(1.0 / pairs.len() as f32);
        let value = loss.item() as f64;
        let grads = p.grads(&g.backward(loss)?);
        let lr = self.schedule.lr(self.step);
        self.adam.step(self.model.params_mut(), &grads, lr);
        self.step += 1;
        Ok(value)
    }

    /// Mean loss over `pairs` and over every unmask state of the schedule.
    pub fn evaluate(&self, pairs: &[TrainingPair]) -> Result<f64> {
        evaluate(&self.model, self.books, pairs)
    }
}

/// Loss averaged over pairs and over the schedule's group starts applied to
/// every position.
pub fn evaluate(model: &TtsModel, books: &CodebookSet, pairs: &[TrainingPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let starts = UnmaskSchedule::new(model.config().levels, model.config().steps)?.group_starts();
    let mut sum = 0.0;
    for (text, codes) in pairs {
        for &u in &starts {
            sum += model.teacher_forced_loss(text, codes, books, &vec![u; codes.len()])?;
        }
    }
    Ok(sum / (pairs.len() * starts.len()) as f64)
}
