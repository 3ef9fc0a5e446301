//! Training loop with the patience/halving learning-rate schedule.
//!
//! After each validation, an improvement of more than [`IMPROVEMENT_EPS`]
//! over the best validation MRR resets the stagnation counter. Once the
//! counter reaches `patience` epochs the learning rate is halved, up to
//! `max_halvings` times; the next exhaustion stops training.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_pair_indices, sample_triplet_indices, EncodedExample};
use crate::error::{Error, Result};
use crate::losses::LossPlan;
use crate::models::{CodeSearchModel, EvalLayer};
use crate::nn::{adam_step, AdamConfig, Module};

pub const IMPROVEMENT_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub patience: usize,
    pub max_halvings: u32,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub validate_every: usize,
    pub validation_pool_size: usize,
    /// Layer whose embeddings are used for validation MRR.
    pub validation_layer: EvalLayer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.001,
            patience: 40,
            max_halvings: 4,
            batch_size: 32,
            max_epochs: 500,
            seed: 0,
            validate_every: 1,
            validation_pool_size: 50,
            validation_layer: EvalLayer::Extraction,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        if self.patience == 0 || self.validate_every == 0 {
            return Err(Error::InvalidArgument(
                "patience and validate_every must be at least 1".into(),
            ));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.initial_lr
            )));
        }
        if self.validation_pool_size < 2 {
            return Err(Error::InvalidArgument("validation pool size must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub lr: f64,
    pub best_val_mrr: f64,
    pub best_epoch: usize,
    pub stagnant_epochs: usize,
    pub halvings_used: u32,
    pub adam_step: u64,
    pub stopped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleEvent {
    Improved,
    Stagnant,
    Halved,
    Stopped,
    /// No validation this epoch.
    Skipped,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        TrainState {
            epoch: 0,
            lr: cfg.initial_lr,
            best_val_mrr: 0.0,
            best_epoch: 0,
            stagnant_epochs: 0,
            halvings_used: 0,
            adam_step: 0,
            stopped: false,
        }
    }

    /// Feeds one validation result covering `epochs` epochs of training.
    pub fn observe(&mut self, val_mrr: f64, epochs: usize, cfg: &TrainConfig) -> ScheduleEvent {
        if val_mrr > self.best_val_mrr + IMPROVEMENT_EPS {
            self.best_val_mrr = val_mrr;
            self.best_epoch = self.epoch;
            self.stagnant_epochs = 0;
            return ScheduleEvent::Improved;
        }
        self.stagnant_epochs += epochs;
        if self.stagnant_epochs < cfg.patience {
            return ScheduleEvent::Stagnant;
        }
        if self.halvings_used < cfg.max_halvings {
            self.halvings_used += 1;
            self.lr = cfg.initial_lr / 2f64.powi(self.halvings_used as i32);
            self.stagnant_epochs = 0;
            ScheduleEvent::Halved
        } else {
            self.stopped = true;
            ScheduleEvent::Stopped
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_mrr: Option<f64>,
    /// Learning rate used during the epoch.
    pub lr: f64,
    /// Stagnation count after the epoch.
    pub stagnant: usize,
    pub halvings: u32,
    pub event: ScheduleEvent,
}

/// Appends records to a line-delimited log.
pub struct TrainLog {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl TrainLog {
    pub fn create(path: impl AsRef<Path>, append: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(TrainLog { file, path })
    }

    pub fn write(&mut self, record: &EpochRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| Error::io(&self.path, e))
    }
}

/// Per-epoch generator: the seed selects the generator, the epoch index its
/// stream, so a resumed run sees the same batches.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Shuffled batches of `batch_size`; a trailing batch of one is merged into
/// the previous batch.
pub fn batch_indices(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

/// One pass over `data`; returns the mean batch loss. Trains epoch index
/// `state.epoch` but does not advance it.
pub fn train_epoch(
    model: &mut CodeSearchModel<f32>,
    data: &[EncodedExample],
    cfg: &TrainConfig,
    state: &mut TrainState,
) -> Result<f64> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::BatchTooSmall(data.len()));
    }
    let mut rng = epoch_rng(cfg.seed, state.epoch);
    let batches = batch_indices(data.len(), cfg.batch_size, &mut rng);
    let adam = AdamConfig::default();
    let triplets = model.config.loss.kind.uses_triplets();
    let mut total = 0.0;
    for (b, idx) in batches.iter().enumerate() {
        let batch: Vec<&EncodedExample> = idx.iter().map(|&i| &data[i]).collect();
        let plan = if triplets {
            LossPlan::Triplets(sample_triplet_indices(batch.len(), &mut rng)?)
        } else {
            LossPlan::Pairs(sample_pair_indices(batch.len(), &mut rng)?)
        };
        let loss = model.loss_and_backward(&batch, &plan)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: state.epoch,
                batch: b,
                ids: batch.iter().map(|e| e.id.clone()).collect(),
            });
        }
        state.adam_step += 1;
        adam_step(&mut model.params_mut(), state.lr, state.adam_step, &adam);
        total += loss;
    }
    Ok(total / batches.len() as f64)
}

pub struct FitOutcome {
    /// Parameters at the best validation epoch, or the final ones if
    /// validation never improved.
    pub best_model: CodeSearchModel<f32>,
    pub best_state: TrainState,
    pub history: Vec<EpochRecord>,
}

/// Trains until the schedule stops or `max_epochs` is reached, continuing
/// from `state` (fresh or restored from a checkpoint).
///
/// `validate` returns the validation MRR for the current parameters.
/// `on_epoch` sees every record together with the model and state after the
/// epoch, and whether the epoch set a new best.
pub fn fit<V, C>(
    model: &mut CodeSearchModel<f32>,
    train: &[EncodedExample],
    cfg: &TrainConfig,
    state: &mut TrainState,
    mut validate: V,
    mut on_epoch: C,
) -> Result<FitOutcome>
where
    V: FnMut(&CodeSearchModel<f32>) -> Result<f64>,
    C: FnMut(&EpochRecord, &CodeSearchModel<f32>, &TrainState, bool) -> Result<()>,
{
    cfg.validate()?;
    let mut best: Option<(CodeSearchModel<f32>, TrainState)> = None;
    let mut history = Vec::new();
    while state.epoch < cfg.max_epochs && !state.stopped {
        let lr = state.lr;
        let mean_loss = train_epoch(model, train, cfg, state)?;
        state.epoch += 1;
        let (val_mrr, event) = if state.epoch % cfg.validate_every == 0 {
            let v = validate(model)?;
            (Some(v), state.observe(v, cfg.validate_every, cfg))
        } else {
            (None, ScheduleEvent::Skipped)
        };
        let improved = event == ScheduleEvent::Improved;
        if improved {
            best = Some((model.clone(), state.clone()));
        }
        let record = EpochRecord {
            epoch: state.epoch,
            mean_loss,
            val_mrr,
            lr,
            stagnant: state.stagnant_epochs,
            halvings: state.halvings_used,
            event,
        };
        log::info!(
            "epoch {} loss {:.5} val_mrr {} lr {} stagnant {}",
            record.epoch,
            record.mean_loss,
            val_mrr.map_or("-".to_string(), |v| format!("{v:.4}")),
            record.lr,
            record.stagnant
        );
        on_epoch(&record, model, state, improved)?;
        history.push(record);
    }
    let (best_model, best_state) = best.unwrap_or_else(|| (model.clone(), state.clone()));
    Ok(FitOutcome {
        best_model,
        best_state,
        history,
    })
}
