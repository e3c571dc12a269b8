//! Training loop: label-smoothed loss, gradient accumulation and clipping,
//! Adafactor updates, the length curriculum and model selection.

mod adafactor;
mod curriculum;

pub use adafactor::{clip_global_norm, Adafactor, AdafactorConfig};
pub use curriculum::{bucket_sizes, CurriculumDataset};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::metrics::corpus_bleu;
use crate::model::{ForwardCtx, Graformer, GraphInput};
use crate::tensor::{Element, Tape};

/// One training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub graph: GraphInput,
    /// Target token ids without BOS/EOS.
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accumulation: usize,
    /// Global gradient norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub label_smoothing: f64,
    /// Decoupled weight decay coefficient.
    pub l2: f64,
    /// Fixed optimizer step size; `None` uses the relative step.
    pub learning_rate: Option<f64>,
    /// Beams used when decoding the validation set for model selection.
    pub selection_beams: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 1,
            grad_accumulation: 1,
            grad_clip: Some(1.0),
            label_smoothing: 0.0,
            l2: 0.0,
            learning_rate: None,
            selection_beams: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(self.epochs >= 1, "epochs must be >= 1");
        contract!(self.batch_size >= 1, "batch size must be >= 1");
        contract!(self.grad_accumulation >= 1, "gradient accumulation must be >= 1");
        if let Some(c) = self.grad_clip {
            contract!(c > 0.0, "gradient clip {c} must be positive");
        }
        contract!(
            (0.0..1.0).contains(&self.label_smoothing),
            "label smoothing {} not in [0, 1)",
            self.label_smoothing
        );
        contract!(self.l2 >= 0.0, "L2 coefficient {} must be >= 0", self.l2);
        contract!(self.selection_beams >= 1, "selection beams must be >= 1");
        self.optimizer().validate()
    }

    pub fn optimizer(&self) -> AdafactorConfig {
        AdafactorConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.l2,
            ..AdafactorConfig::default()
        }
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Summed token loss over the window.
    pub loss_sum: f64,
    /// Scored tokens in the window (targets plus EOS).
    pub tokens: usize,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean loss per scored token.
    pub loss: f64,
    pub steps: usize,
    pub tokens: usize,
    pub seconds: f64,
}

/// Owns a model and its optimizer state.
pub struct Trainer<T: Element> {
    model: Graformer<T>,
    optimizer: Adafactor,
    config: TrainConfig,
    rng: ChaCha8Rng,
}

impl<T: Element> Trainer<T> {
    pub fn new(model: Graformer<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adafactor::new(config.optimizer(), model.params())?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            model,
            optimizer,
            config,
            rng,
        })
    }

    pub fn model(&self) -> &Graformer<T> {
        &self.model
    }

    pub fn into_model(self) -> Graformer<T> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.optimizer.step_count()
    }

    /// One optimizer step over an accumulation window given as a list of
    /// batches. Every example's loss is divided by the number of scored
    /// tokens in the whole window, so the split into batches does not change
    /// the update. `first_batch` only labels errors.
    pub fn step(&mut self, batches: &[Vec<&Example>], first_batch: usize) -> Result<StepReport> {
        let tokens: usize = batches.iter().flatten().map(|e| e.target.len() + 1).sum();
        contract!(tokens > 0, "empty accumulation window");
        let normalizer = tokens as f64;
        let mut acc: Vec<Option<Vec<T>>> = vec![None; self.model.params().len()];
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            for ex in batch {
                let mut tape = Tape::new(self.model.params());
                let mut ctx = ForwardCtx::new(true, &mut self.rng);
                let loss = self.model.loss(
                    &mut tape,
                    &ex.graph,
                    &ex.target,
                    self.config.label_smoothing,
                    normalizer,
                    &mut ctx,
                )?;
                let value = tape.scalar(loss).as_f64();
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        batch: first_batch + b,
                        value,
                    });
                }
                loss_sum += value * normalizer;
                for (slot, g) in acc.iter_mut().zip(tape.backward(loss)?.into_params()) {
                    if let Some(g) = g {
                        match slot {
                            Some(s) => s.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                            None => *slot = Some(g),
                        }
                    }
                }
            }
        }
        let grad_norm = match self.config.grad_clip {
            Some(c) => clip_global_norm(&mut acc, c),
            None => clip_global_norm(&mut acc, f64::INFINITY),
        };
        let clipped_norm = clip_global_norm(&mut acc, f64::INFINITY);
        self.optimizer.step(self.model.params_mut(), &acc)?;
        Ok(StepReport {
            loss_sum,
            tokens,
            grad_norm,
            clipped_norm,
        })
    }

    /// One pass over `data` in curriculum order: batches of `batch_size`
    /// within each bucket, one optimizer step per `grad_accumulation`
    /// consecutive batches.
    pub fn train_epoch(&mut self, data: &[Example], curriculum: &CurriculumDataset, epoch: usize) -> Result<EpochReport> {
        contract!(
            curriculum.len() == data.len(),
            "curriculum covers {} instances, data has {}",
            curriculum.len(),
            data.len()
        );
        let start = Instant::now();
        let batches = curriculum.epoch_batches(epoch, self.config.batch_size)?;
        let mut loss = 0.0;
        let mut tokens = 0;
        let mut steps = 0;
        for (w, window) in batches.chunks(self.config.grad_accumulation).enumerate() {
            let window: Vec<Vec<&Example>> = window.iter().map(|b| b.iter().map(|&i| &data[i]).collect()).collect();
            let r = self.step(&window, w * self.config.grad_accumulation)?;
            loss += r.loss_sum;
            tokens += r.tokens;
            steps += 1;
        }
        Ok(EpochReport {
            epoch,
            loss: loss / tokens.max(1) as f64,
            steps,
            tokens,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Result of comparing candidate models on a validation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: usize,
    pub scores: Vec<f64>,
}

/// Picks the candidate whose decoded validation output has the highest
/// corpus BLEU against `references` (one reference set per example).
/// Earlier candidates win ties.
pub fn select_model<C, F>(candidates: &[C], references: &[Vec<String>], mut decode: F) -> Result<Selection>
where
    F: FnMut(&C) -> Result<Vec<String>>,
{
    contract!(!candidates.is_empty(), "no candidates to select from");
    contract!(!references.is_empty(), "empty validation set");
    let mut scores = Vec::with_capacity(candidates.len());
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        let hyps = decode(c)?;
        let s = corpus_bleu(&hyps, references)?;
        if s > scores.get(best).copied().unwrap_or(f64::NEG_INFINITY) {
            best = i;
        }
        scores.push(s);
    }
    Ok(Selection { best, scores })
}

/// `epoch=.. loss=.. val_bleu=.. time_s=..`
pub fn epoch_log_line(report: &EpochReport, val_bleu: Option<f64>) -> String {
    let bleu = val_bleu.map_or_else(|| "nan".to_string(), |b| format!("{b:.4}"));
    format!(
        "epoch={} loss={:.6} val_bleu={} time_s={:.3}",
        report.epoch, report.loss, bleu, report.seconds
    )
}
