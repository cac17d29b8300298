//! Gradual freezing.
//!
//! After a linear-probing warm-up of `epsilon_cond` epochs every layer is
//! unfrozen. From then on, at the end of each epoch, each trainable layer's
//! relative gradient norm `r = ‖g‖ / ‖ω‖` (epoch-mean gradient) sets its
//! learning rate to `(r / r_max) · base_lr`, and every `epsilon_step` epochs
//! the least active layers or block are frozen for good.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::autodiff::Float;
use crate::error::{Error, Result};
use crate::nn::{BlockPartition, Model};
use crate::train::{self, Evaluator, EpochUpdate, MetricsRecord, Phase, RunOutcome, Schedule, TrainConfig};
use crate::data::Dataset;

/// Guard on the weight norm in the RGN denominator.
pub const NORM_FLOOR: f64 = 1e-12;

fn sum_squares<T: Float>(values: &[T]) -> f64 {
    values.iter().map(|v| v.as_f64() * v.as_f64()).sum()
}

/// `‖g‖₂ / max(‖ω‖₂, 1e-12)` per layer over its concatenated weight and bias.
/// Layers without gradient buffers count as zero gradient.
pub fn compute_rgn<T: Float>(model: &Model<T>) -> Vec<f64> {
    model
        .layers()
        .iter()
        .map(|l| {
            let g2: f64 = l.params().iter().map(|p| p.grad().map_or(0.0, sum_squares)).sum();
            let w2: f64 = l.params().iter().map(|p| sum_squares(p.data())).sum();
            g2.sqrt() / w2.sqrt().max(NORM_FLOOR)
        })
        .collect()
}

/// `α_i = r_i / r_max` over trainable layers; all ones when every trainable
/// RGN is zero; zero for frozen layers.
pub fn compute_alpha(rgn: &[f64], trainable: &[bool]) -> Vec<f64> {
    let r_max = rgn
        .iter()
        .zip(trainable)
        .filter(|(_, &t)| t)
        .map(|(&r, _)| r)
        .fold(0.0f64, f64::max);
    rgn.iter()
        .zip(trainable)
        .map(|(&r, &t)| match (t, r_max > 0.0) {
            (false, _) => 0.0,
            (true, false) => 1.0,
            (true, true) => r / r_max,
        })
        .collect()
}

/// `λ_i ← α_i · base_lr_i` for trainable layers; frozen layers get 0.
pub fn update_learning_rates<T: Float>(model: &mut Model<T>, alpha: &[f64]) -> Result<()> {
    if alpha.len() != model.layer_count() {
        return Err(Error::shape(
            "update_learning_rates",
            format!("{} weights for {} layers", alpha.len(), model.layer_count()),
        ));
    }
    for (i, &a) in alpha.iter().enumerate() {
        let layer = model.layer(i)?;
        let lr = if layer.is_frozen() { 0.0 } else { a * layer.base_lr() };
        model.set_effective_lr(i, lr)?;
    }
    Ok(())
}

/// Mean RGN over the trainable layers of each block; `None` for blocks with
/// no trainable layer.
pub fn compute_importance(rgn: &[f64], partition: &BlockPartition, trainable: &[bool]) -> Vec<Option<f64>> {
    partition
        .blocks()
        .iter()
        .map(|block| {
            let live: Vec<f64> = block.iter().filter(|&&i| trainable[i]).map(|&i| rgn[i]).collect();
            (!live.is_empty()).then(|| live.iter().sum::<f64>() / live.len() as f64)
        })
        .collect()
}

/// Replaces each trainable layer's weight with the mean over the trainable
/// layers of its block.
pub fn block_average_alpha(alpha: &[f64], partition: &BlockPartition, trainable: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; alpha.len()];
    for (block, mean) in partition.blocks().iter().zip(compute_importance(alpha, partition, trainable)) {
        if let Some(m) = mean {
            for &i in block.iter().filter(|&&i| trainable[i]) {
                out[i] = m;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FreezePolicy {
    /// Freeze the `⌈ρ·n⌉` lowest-RGN of the `n` trainable eligible layers.
    LayerPercent(f64),
    /// Freeze the block with the lowest importance.
    BlockOne,
    /// As [`FreezePolicy::BlockOne`], with block-averaged learning-rate weights.
    BlockOneAveragedLr,
}

impl FreezePolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            FreezePolicy::LayerPercent(r) if !(*r > 0.0 && *r < 1.0) => {
                Err(Error::config(format!("freeze ratio must be in (0, 1), got {r}")))
            }
            _ => Ok(()),
        }
    }
}

fn eligible<T: Float>(model: &Model<T>, classifier_exempt: bool) -> Vec<bool> {
    let ci = model.classifier_index();
    model
        .trainable()
        .iter()
        .enumerate()
        .map(|(i, &t)| t && !(classifier_exempt && i == ci))
        .collect()
}

/// Layers to freeze at a freezing step. At least one eligible layer (or
/// block) is always left trainable; ties go to the lowest index.
pub fn select_freeze_targets<T: Float>(
    model: &Model<T>,
    rgn: &[f64],
    policy: &FreezePolicy,
    classifier_exempt: bool,
) -> Vec<usize> {
    let ok = eligible(model, classifier_exempt);
    match policy {
        FreezePolicy::LayerPercent(rho) => {
            let mut pool: Vec<usize> = (0..ok.len()).filter(|&i| ok[i]).collect();
            let n = pool.len();
            if n <= 1 {
                return Vec::new();
            }
            // the small slack keeps e.g. 0.7·10 from rounding up to 8
            let k = ((rho * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
            pool.sort_by(|&a, &b| rgn[a].total_cmp(&rgn[b]).then(a.cmp(&b)));
            let mut picked = pool[..k].to_vec();
            picked.sort_unstable();
            picked
        }
        FreezePolicy::BlockOne | FreezePolicy::BlockOneAveragedLr => {
            let trainable = model.trainable();
            let importance = compute_importance(rgn, model.partition(), &trainable);
            let candidates: Vec<usize> = (0..model.partition().block_count())
                .filter(|&j| model.partition().blocks()[j].iter().any(|&i| ok[i]))
                .collect();
            if candidates.len() <= 1 {
                return Vec::new();
            }
            let j = *candidates
                .iter()
                .min_by(|&&a, &&b| {
                    let (ia, ib) = (importance[a].unwrap_or(f64::INFINITY), importance[b].unwrap_or(f64::INFINITY));
                    ia.total_cmp(&ib).then(a.cmp(&b))
                })
                .expect("nonempty");
            model.partition().blocks()[j].iter().copied().filter(|&i| ok[i]).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfzConfig {
    pub policy: FreezePolicy,
    pub epsilon_cond: usize,
    pub epsilon_step: usize,
    pub classifier_exempt: bool,
}

impl Default for GfzConfig {
    fn default() -> Self {
        Self {
            policy: FreezePolicy::LayerPercent(0.4),
            epsilon_cond: 3,
            epsilon_step: 1,
            classifier_exempt: true,
        }
    }
}

impl GfzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_step == 0 {
            return Err(Error::config("epsilon_step must be at least 1"));
        }
        self.policy.validate()
    }
}

/// Scheduler bookkeeping after the most recent epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchedulerState {
    pub epoch: usize,
    pub phase: Option<Phase>,
    pub rgn: Vec<f64>,
    pub alpha: Vec<f64>,
    pub importance: Vec<Option<f64>>,
    /// Layers frozen during gradual freezing, in no particular order.
    pub frozen_set: BTreeSet<usize>,
    pub freeze_epochs: usize,
}

#[derive(Debug, Clone)]
pub struct GfzSchedule {
    config: GfzConfig,
    state: SchedulerState,
}

impl GfzSchedule {
    pub fn new(config: GfzConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: SchedulerState::default(),
        })
    }

    pub fn state(&self) -> &SchedulerState {
        &self.state
    }
}

impl Schedule for GfzSchedule {
    fn begin_epoch(&mut self, epoch: usize, model: &mut Model) -> Result<Phase> {
        self.state.epoch = epoch;
        let phase = if epoch <= self.config.epsilon_cond {
            if self.state.phase.is_none() {
                model.set_all_frozen(true);
                let ci = model.classifier_index();
                model.set_frozen(&[ci], false)?;
                model.reset_learning_rates();
            }
            Phase::PreConditioning
        } else {
            if self.state.phase != Some(Phase::GradualFreezing) {
                model.set_all_frozen(false);
                model.reset_learning_rates();
            }
            Phase::GradualFreezing
        };
        self.state.phase = Some(phase);
        Ok(phase)
    }

    fn end_epoch(&mut self, _epoch: usize, model: &mut Model, rgn: &[f64]) -> Result<EpochUpdate> {
        self.state.rgn = rgn.to_vec();
        let trainable = model.trainable();
        self.state.importance = compute_importance(rgn, model.partition(), &trainable);
        if self.state.phase != Some(Phase::GradualFreezing) {
            return Ok(EpochUpdate::default());
        }
        let alpha = compute_alpha(rgn, &trainable);
        let weights = match self.config.policy {
            FreezePolicy::BlockOneAveragedLr => block_average_alpha(&alpha, model.partition(), &trainable),
            _ => alpha.clone(),
        };
        update_learning_rates(model, &weights)?;
        self.state.alpha = alpha.clone();

        self.state.freeze_epochs += 1;
        let mut frozen = Vec::new();
        if self.state.freeze_epochs % self.config.epsilon_step == 0 {
            frozen = select_freeze_targets(model, rgn, &self.config.policy, self.config.classifier_exempt);
            model.set_frozen(&frozen, true)?;
            for &i in &frozen {
                model.set_effective_lr(i, 0.0)?;
            }
            self.state.frozen_set.extend(frozen.iter().copied());
        }
        Ok(EpochUpdate {
            alpha: Some(alpha),
            newly_frozen: frozen,
        })
    }
}

/// Runs the full gradual-freezing procedure on a model whose classifier has
/// already been replaced for the target task.
pub fn run_gfz(
    model: &mut Model,
    train_set: &Dataset,
    evaluator: &mut dyn Evaluator,
    gfz: &GfzConfig,
    config: &TrainConfig,
    observer: Option<&mut dyn FnMut(&MetricsRecord, &Model)>,
) -> Result<RunOutcome> {
    let mut schedule = GfzSchedule::new(gfz.clone())?;
    train::run_training(model, &mut schedule, train_set, evaluator, config, observer)
}
