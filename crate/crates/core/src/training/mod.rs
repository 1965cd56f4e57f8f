//! Losses, Adam, batching, early stopping and the training loop.

mod adam;
mod batch;
mod early_stop;
mod losses;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::{epoch_order, make_batches, Batch, PaddedBatch};
pub use early_stop::{EarlyStopping, StopDecision};
pub use losses::{multi_task_loss, weighted_bce_batch};

use crate::data::{class_weights, Dataset, Example};
use crate::error::{Error, Result};
use crate::model::{BoundModel, Mode, Model, ModelConfig};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size, patience and max_epochs must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_loss
    }
}

/// How one session contributes to the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Class-weighted BCE with weights `(w0, w1)`.
    Binary { w0: f64, w1: f64 },
    /// Sum over codes of squared errors.
    Regression,
}

impl Objective {
    /// Balanced class weights from `train` for single-task, MSE otherwise.
    pub fn for_training(mode: Mode, train: &Dataset) -> Result<Objective> {
        match mode {
            Mode::SingleTask => {
                let (w0, w1) = class_weights(&train.labels())?;
                Ok(Objective::Binary { w0, w1 })
            }
            Mode::MultiTask => Ok(Objective::Regression),
        }
    }

    fn sample_loss(&self, tape: &mut Tape, output: Var, ex: &Example) -> Result<Var> {
        match *self {
            Objective::Binary { w0, w1 } => {
                let w = if ex.label == 1 { w1 } else { w0 };
                tape.weighted_bce(output, f64::from(ex.label), w)
            }
            Objective::Regression => {
                let target = tape.constant(Tensor::row(ex.codes.to_vec()));
                let diff = tape.sub(output, target)?;
                let sq = tape.mul(diff, diff)?;
                Ok(tape.sum(sq))
            }
        }
    }
}

/// Records the mean loss over `indices` on a fresh tape.
fn batch_loss(
    model: &Model,
    data: &Dataset,
    indices: &[usize],
    objective: &Objective,
    tape: &mut Tape,
) -> Result<Var> {
    let bound = BoundModel::bind(model, tape);
    let mut total: Option<Var> = None;
    for &i in indices {
        let ex = &data.examples[i];
        let mask = vec![true; ex.len()];
        let f = bound.forward(tape, &ex.x, &mask, &ex.meta)?;
        let l = objective.sample_loss(tape, f.output, ex)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, l)?,
            None => l,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("empty batch".into()))?;
    Ok(tape.affine(total, 1.0 / indices.len() as f64, 0.0))
}

/// Mean per-session loss over the whole dataset without recording gradients.
pub fn dataset_loss(model: &Model, data: &Dataset, objective: &Objective) -> Result<f64> {
    const CHUNK: usize = 64;
    let mut sum = 0.0;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(CHUNK) {
        let mut tape = Tape::new();
        let l = batch_loss(model, data, chunk, objective, &mut tape)?;
        sum += tape.value(l).values()[0] * chunk.len() as f64;
    }
    Ok(sum / data.len() as f64)
}

/// One optimizer step on `indices`; returns the batch loss before the step.
pub fn train_step(
    model: &mut Model,
    adam: &mut AdamState,
    data: &Dataset,
    indices: &[usize],
    objective: &Objective,
    lr: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = batch_loss(model, data, indices, objective, &mut tape)?;
    let value = tape.value(loss).values()[0];
    let grads = tape.backward(loss)?;
    model.params.zero_grad();
    model.params.accumulate(&grads);
    adam_step(&mut model.params, adam, lr);
    Ok(value)
}

fn check_disjoint(train: &Dataset, val: &Dataset) -> Result<()> {
    let train_t = train.therapists();
    let shared: BTreeSet<&str> = val
        .therapists()
        .into_iter()
        .filter(|t| train_t.contains(t))
        .collect();
    if !shared.is_empty() {
        return Err(Error::Protocol(format!(
            "therapists appear in both training and validation data: {}",
            shared.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

/// Trains with early stopping on `val` and returns the best-validation
/// parameters.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Contract(
            "training and validation sets must both be non-empty".into(),
        ));
    }
    check_disjoint(train_set, val_set)?;
    let objective = Objective::for_training(model_config.mode, train_set)?;
    let mut model = Model::new(model_config, config.seed)?;
    let mut adam = AdamState::new(&model.params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.params.clone();
    let mut epochs = Vec::new();

    for epoch in 1..=config.max_epochs {
        let mut sum = 0.0;
        for batch in make_batches(train_set.len(), config.batch_size, config.seed, epoch) {
            let l = train_step(
                &mut model,
                &mut adam,
                train_set,
                &batch.indices,
                &objective,
                config.learning_rate,
            )?;
            sum += l * batch.len() as f64;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = dataset_loss(&model, val_set, &objective)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-finite loss at epoch {epoch}: train {train_loss}, validation {val_loss}"
            )));
        }
        epochs.push(EpochLoss {
            train_loss,
            val_loss,
        });
        let decision = stopper.observe(epoch, val_loss);
        if decision.improved {
            best = model.params.clone();
        }
        if decision.stop {
            break;
        }
    }
    model.params.copy_values_from(&best);
    let history = TrainHistory {
        stopped_epoch: epochs.len(),
        best_epoch: stopper.best_epoch,
        epochs,
    };
    Ok((model, history))
}
