//! The training loop shared by every fine-tuning strategy.
//!
//! A [`Schedule`] decides, epoch by epoch, which layers train and at what
//! rates; the loop does the rest: seeded batch order, loss and backward
//! pass, Adam updates, epoch-mean gradients for the RGN, validation, early
//! stopping and per-epoch records.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gfz::compute_rgn;
use crate::metrics::{mean_average_precision, mean_roc_auc, PredictionSet};
use crate::nn::{multilabel_bce, Forward, Model};
use crate::optim::AdamState;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Classifier-only warm-up; early stopping is suspended.
    PreConditioning,
    GradualFreezing,
    FineTuning,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::PreConditioning => "pre-conditioning",
            Phase::GradualFreezing => "gradual-freezing",
            Phase::FineTuning => "fine-tuning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub augment: bool,
    /// Master seed for batch order and augmentation.
    pub seed: u64,
    /// Put the best-validation weights back into the model at the end.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            augment: true,
            seed: 0,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::config("batch_size, max_epochs and patience must be at least 1"));
        }
        Ok(())
    }
}

/// Stops after `patience` consecutive epochs without a strictly better value.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    no_improve: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        Ok(Self {
            patience,
            best: None,
            best_epoch: 0,
            no_improve: 0,
        })
    }

    /// Records `value` for `epoch`; true when it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if self.best.map_or(true, |b| value > b) {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.no_improve = 0;
            true
        } else {
            self.no_improve = (self.no_improve + 1).min(self.patience);
            false
        }
    }

    /// Restarts the patience window without forgetting the best value.
    pub fn reset_counter(&mut self) {
        self.no_improve = 0;
    }

    pub fn should_stop(&self) -> bool {
        self.no_improve >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn no_improve(&self) -> usize {
        self.no_improve
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub map: f64,
    pub mean_auc: Option<f64>,
    pub per_class_ap: Vec<Option<f64>>,
}

pub trait Evaluator {
    fn evaluate(&mut self, model: &Model, epoch: usize) -> Result<Evaluation>;
}

/// Sigmoid scores of `model` on every sample of `data`.
pub fn predict(model: &Model, data: &Dataset, batch_size: usize) -> Result<PredictionSet> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut scores = Vec::with_capacity(data.len() * data.class_count);
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk, None);
        let mut tape = Tape::new();
        let xv = tape.constant(&x);
        let fwd = model.forward(&mut tape, xv)?;
        for &z in tape.value(fwd.logits) {
            let z = z as f64;
            if !z.is_finite() {
                return Err(Error::NonFinite(format!("logit {z} during evaluation")));
            }
            scores.push(1.0 / (1.0 + (-z).exp()));
        }
    }
    PredictionSet::new(data.len(), data.class_count, scores, data.label_matrix())
}

pub fn evaluate_dataset(model: &Model, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    let preds = predict(model, data, batch_size)?;
    let map = mean_average_precision(&preds)?;
    Ok(Evaluation {
        map: map.map,
        mean_auc: mean_roc_auc(&preds).ok().map(|a| a.mean),
        per_class_ap: map.per_class,
    })
}

/// Evaluates on a fixed validation split.
pub struct DatasetEvaluator<'a> {
    pub data: &'a Dataset,
    pub batch_size: usize,
}

impl Evaluator for DatasetEvaluator<'_> {
    fn evaluate(&mut self, model: &Model, _epoch: usize) -> Result<Evaluation> {
        evaluate_dataset(model, self.data, self.batch_size)
    }
}

/// What a schedule did at the end of an epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochUpdate {
    /// Normalised RGN weights, when the schedule computed them.
    pub alpha: Option<Vec<f64>>,
    pub newly_frozen: Vec<usize>,
}

pub trait Schedule {
    /// Sets freeze flags and rates for `epoch` (1-based) and names its phase.
    fn begin_epoch(&mut self, epoch: usize, model: &mut Model) -> Result<Phase>;

    /// Called after the epoch's updates with the epoch-mean-gradient RGNs.
    fn end_epoch(&mut self, _epoch: usize, _model: &mut Model, _rgn: &[f64]) -> Result<EpochUpdate> {
        Ok(EpochUpdate::default())
    }

    /// Extra loss term recorded on the batch's tape.
    fn penalty(&self, _tape: &mut Tape, _fwd: &Forward) -> Result<Option<Var>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub phase: Phase,
    /// Mean BCE over the epoch's samples (penalty terms excluded).
    pub train_loss: f64,
    pub val_map: f64,
    pub val_auc: Option<f64>,
    pub per_class_ap: Vec<Option<f64>>,
    pub trainable_layer_count: usize,
    /// Layers that received updates during this epoch.
    pub trained: Vec<bool>,
    pub rgn: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    /// Rates used during this epoch (0 for frozen layers).
    pub effective_lr: Vec<f64>,
    pub newly_frozen: Vec<usize>,
    /// Parameter elements updated by the optimizer since the run started.
    pub cumulative_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<MetricsRecord>,
    pub best_epoch: usize,
    pub best_val_map: f64,
    pub stopped_early: bool,
}

struct EpochTotals {
    loss: f64,
    updates: u64,
}

fn train_epoch(
    model: &mut Model,
    adam: &mut AdamState,
    schedule: &dyn Schedule,
    data: &Dataset,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochTotals> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::stream(config.seed, "data", epoch as u64));
    let trained = model.trainable();
    let mut sums: Vec<Vec<Vec<f64>>> = model
        .layers()
        .iter()
        .zip(&trained)
        .map(|(l, &t)| {
            if t {
                l.params().iter().map(|p| vec![0.0; p.len()]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut totals = EpochTotals { loss: 0.0, updates: 0 };
    let mut steps = 0usize;

    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let (x, y) = data.batch(chunk, config.augment.then_some((config.seed, epoch)));
        let mut tape = Tape::new();
        let xv = tape.constant(&x);
        let fwd = model.forward(&mut tape, xv)?;
        let bce = multilabel_bce(&mut tape, fwd.logits, &y)?;
        let value = tape.value(bce)[0] as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value} at epoch {epoch}, batch {b}")));
        }
        totals.loss += value * chunk.len() as f64;
        if model.trainable_count() == 0 {
            continue;
        }
        let loss = match schedule.penalty(&mut tape, &fwd)? {
            Some(p) => tape.add(bce, p)?,
            None => bce,
        };
        let grads = tape.backward(loss)?;
        model.zero_grad();
        model.accumulate_grads(&grads, &fwd)?;
        for (layer, sum) in model.layers().iter().zip(sums.iter_mut()) {
            for (p, s) in layer.params().iter().zip(sum.iter_mut()) {
                for (acc, &g) in s.iter_mut().zip(p.grad().expect("zeroed above")) {
                    *acc += g as f64;
                }
            }
        }
        totals.updates += adam.step(model)? as u64;
        steps += 1;
    }
    totals.loss /= data.len() as f64;

    for (li, sum) in sums.into_iter().enumerate() {
        let layer = model.layer_mut(li)?;
        for (pi, p) in layer.params_mut().iter_mut().enumerate() {
            let mean = match sum.get(pi) {
                Some(s) if steps > 0 => s.iter().map(|&v| (v / steps as f64) as f32).collect(),
                _ => vec![0.0; p.len()],
            };
            p.set_grad(mean)?;
        }
    }
    Ok(totals)
}

/// Trains until the epoch cap or until validation mAP stalls for
/// `patience` epochs outside pre-conditioning. A change of phase restarts
/// the patience window.
pub fn run_training(
    model: &mut Model,
    schedule: &mut dyn Schedule,
    train: &Dataset,
    evaluator: &mut dyn Evaluator,
    config: &TrainConfig,
    mut observer: Option<&mut dyn FnMut(&MetricsRecord, &Model)>,
) -> Result<RunOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    if train.class_count != model.class_count() {
        return Err(Error::config(format!(
            "dataset has {} classes, model predicts {}",
            train.class_count,
            model.class_count()
        )));
    }
    model.set_base_lr(config.base_lr)?;
    let mut adam = AdamState::new(model);
    let mut stopper = EarlyStopping::new(config.patience)?;
    let mut records = Vec::new();
    let mut cumulative = 0u64;
    let mut previous: Option<Phase> = None;
    let mut best_weights = model.snapshot();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let phase = schedule.begin_epoch(epoch, model)?;
        if previous.is_some_and(|p| p != phase) {
            stopper.reset_counter();
        }
        previous = Some(phase);
        let trained = model.trainable();
        let effective_lr = model
            .layers()
            .iter()
            .map(|l| if l.is_frozen() { 0.0 } else { l.effective_lr() })
            .collect();

        let totals = train_epoch(model, &mut adam, schedule, train, config, epoch)?;
        cumulative += totals.updates;
        let rgn = compute_rgn(model);
        let update = schedule.end_epoch(epoch, model, &rgn)?;
        let eval = evaluator.evaluate(model, epoch)?;
        if stopper.observe(epoch, eval.map) {
            best_weights = model.snapshot();
        }
        log::info!(
            "epoch {epoch:>3} {:<16} loss {:.4} val mAP {:.4} trainable {}",
            phase.name(),
            totals.loss,
            eval.map,
            trained.iter().filter(|&&t| t).count()
        );
        let record = MetricsRecord {
            epoch,
            phase,
            train_loss: totals.loss,
            val_map: eval.map,
            val_auc: eval.mean_auc,
            per_class_ap: eval.per_class_ap,
            trainable_layer_count: trained.iter().filter(|&&t| t).count(),
            trained,
            rgn,
            alpha: update.alpha,
            effective_lr,
            newly_frozen: update.newly_frozen,
            cumulative_updates: cumulative,
        };
        if let Some(obs) = observer.as_mut() {
            obs(&record, model);
        }
        records.push(record);
        if phase != Phase::PreConditioning && stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }
    if config.restore_best {
        model.restore(&best_weights)?;
    }
    Ok(RunOutcome {
        records,
        best_epoch: stopper.best_epoch(),
        best_val_map: stopper.best().unwrap_or(f64::NAN),
        stopped_early,
    })
}
