//! Comparison fine-tuning strategies on the shared training loop.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Float, Tape, Tensor, Var};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gfz::{compute_alpha, update_learning_rates};
use crate::nn::{Forward, Model};
use crate::train::{self, EpochUpdate, Evaluator, MetricsRecord, Phase, RunOutcome, Schedule, TrainConfig};

pub const DEFAULT_SP_A: f64 = 0.1;
pub const DEFAULT_SP_B: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StrategySpec {
    FullFt,
    LinearProbe,
    /// Linear probing for `lp_epochs`, then full fine-tuning.
    LpFt { lp_epochs: usize },
    /// One more block trainable every `step_epochs`, starting from the classifier.
    GradualUnfreezeLastFirst { step_epochs: usize },
    /// One more block trainable every `step_epochs`, starting from the stem.
    /// The new classifier trains throughout.
    GradualUnfreezeFirstLast { step_epochs: usize },
    L1Sp { a: f64, b: f64 },
    L2Sp { a: f64, b: f64 },
    /// Per-layer rates from normalised RGNs every epoch, no freezing.
    AutoRgn,
}

impl StrategySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategySpec::LpFt { lp_epochs: 0 } => Err(Error::config("lp_epochs must be at least 1")),
            StrategySpec::GradualUnfreezeLastFirst { step_epochs: 0 }
            | StrategySpec::GradualUnfreezeFirstLast { step_epochs: 0 } => {
                Err(Error::config("step_epochs must be at least 1"))
            }
            StrategySpec::L1Sp { a, b } | StrategySpec::L2Sp { a, b }
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) =>
            {
                Err(Error::config(format!("SP weights must be finite and >= 0, got a = {a}, b = {b}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpNorm {
    L1,
    L2,
}

/// Pretrained values of every layer except the (new) classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SpReference<T: Float = f32> {
    layers: Vec<Vec<Tensor<T>>>,
}

impl<T: Float> SpReference<T> {
    pub fn from_model(model: &Model<T>) -> Self {
        let ci = model.classifier_index();
        Self {
            layers: model.layers()[..ci]
                .iter()
                .map(|l| l.params().iter().map(|p| Tensor::new(p.shape().to_vec(), p.data().to_vec()).expect("same shape")).collect())
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<Tensor<T>>] {
        &self.layers
    }
}

fn norm_term<T: Float>(tape: &mut Tape<T>, x: Var, norm: SpNorm) -> Result<Var> {
    let t = match norm {
        SpNorm::L1 => tape.abs(x),
        SpNorm::L2 => tape.mul(x, x)?,
    };
    Ok(tape.sum(t))
}

/// `a·‖ω − ω⁰‖ + b·‖ω̂‖` (L1, or squared L2) where `ω` are the layers that
/// existed before fine-tuning and `ω̂` the new classifier.
pub fn sp_penalty<T: Float>(
    tape: &mut Tape<T>,
    fwd: &Forward,
    reference: &SpReference<T>,
    norm: SpNorm,
    a: f64,
    b: f64,
) -> Result<Var> {
    let ci = fwd.params.len() - 1;
    if reference.layers.len() != ci {
        return Err(Error::shape(
            "sp_penalty",
            format!("reference has {} layers, model has {ci} before the classifier", reference.layers.len()),
        ));
    }
    let mut deviation = Vec::new();
    for (vars, refs) in fwd.params[..ci].iter().zip(&reference.layers) {
        for (&w, w0) in vars.iter().zip(refs) {
            let w0 = tape.constant(w0);
            let d = tape.sub(w, w0)?;
            deviation.push(norm_term(tape, d, norm)?);
        }
    }
    let mut head = Vec::new();
    for &w in &fwd.params[ci] {
        head.push(norm_term(tape, w, norm)?);
    }
    let mut total_dev = deviation[0];
    for &t in &deviation[1..] {
        total_dev = tape.add(total_dev, t)?;
    }
    let mut total_head = head[0];
    for &t in &head[1..] {
        total_head = tape.add(total_head, t)?;
    }
    let a_term = tape.scale(total_dev, a);
    let b_term = tape.scale(total_head, b);
    tape.add(a_term, b_term)
}

/// `‖ω − ω⁰‖₂` over the reference layers.
pub fn distance_from_reference<T: Float>(model: &Model<T>, reference: &SpReference<T>) -> f64 {
    let mut s = 0.0;
    for (layer, refs) in model.layers().iter().zip(&reference.layers) {
        for (p, r) in layer.params().iter().zip(refs) {
            s += p
                .data()
                .iter()
                .zip(r.data())
                .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
                .sum::<f64>();
        }
    }
    s.sqrt()
}

/// Block indices trainable at `epoch` under gradual unfreezing.
fn unfrozen_blocks(spec: &StrategySpec, epoch: usize, block_count: usize) -> Vec<usize> {
    match *spec {
        StrategySpec::GradualUnfreezeLastFirst { step_epochs } => {
            let k = (1 + (epoch - 1) / step_epochs).min(block_count);
            (block_count - k..block_count).collect()
        }
        StrategySpec::GradualUnfreezeFirstLast { step_epochs } => {
            let k = (1 + (epoch - 1) / step_epochs).min(block_count);
            let mut b: Vec<usize> = (0..k).collect();
            if !b.contains(&(block_count - 1)) {
                b.push(block_count - 1);
            }
            b
        }
        _ => (0..block_count).collect(),
    }
}

pub struct BaselineSchedule {
    spec: StrategySpec,
    reference: Option<SpReference>,
}

impl BaselineSchedule {
    /// `model` must be the freshly adapted model; SP strategies take their
    /// reference from it.
    pub fn new(spec: StrategySpec, model: &Model) -> Result<Self> {
        spec.validate()?;
        let reference = matches!(spec, StrategySpec::L1Sp { .. } | StrategySpec::L2Sp { .. })
            .then(|| SpReference::from_model(model));
        Ok(Self { spec, reference })
    }
}

impl Schedule for BaselineSchedule {
    fn begin_epoch(&mut self, epoch: usize, model: &mut Model) -> Result<Phase> {
        let ci = model.classifier_index();
        let classifier_only = |model: &mut Model| -> Result<()> {
            model.set_all_frozen(true);
            model.set_frozen(&[ci], false)
        };
        match self.spec {
            StrategySpec::LinearProbe => {
                classifier_only(model)?;
                Ok(Phase::FineTuning)
            }
            StrategySpec::LpFt { lp_epochs } if epoch <= lp_epochs => {
                classifier_only(model)?;
                Ok(Phase::PreConditioning)
            }
            StrategySpec::GradualUnfreezeLastFirst { .. } | StrategySpec::GradualUnfreezeFirstLast { .. } => {
                let partition = model.partition().clone();
                model.set_all_frozen(true);
                for j in unfrozen_blocks(&self.spec, epoch, partition.block_count()) {
                    model.set_frozen(&partition.blocks()[j], false)?;
                }
                model.reset_learning_rates();
                Ok(Phase::FineTuning)
            }
            _ => {
                let start = match self.spec {
                    StrategySpec::LpFt { lp_epochs } => lp_epochs + 1,
                    _ => 1,
                };
                if epoch == start {
                    model.set_all_frozen(false);
                    model.reset_learning_rates();
                }
                Ok(Phase::FineTuning)
            }
        }
    }

    fn end_epoch(&mut self, _epoch: usize, model: &mut Model, rgn: &[f64]) -> Result<EpochUpdate> {
        if self.spec != StrategySpec::AutoRgn {
            return Ok(EpochUpdate::default());
        }
        let alpha = compute_alpha(rgn, &model.trainable());
        update_learning_rates(model, &alpha)?;
        Ok(EpochUpdate {
            alpha: Some(alpha),
            newly_frozen: Vec::new(),
        })
    }

    fn penalty(&self, tape: &mut Tape, fwd: &Forward) -> Result<Option<Var>> {
        let (norm, a, b) = match self.spec {
            StrategySpec::L1Sp { a, b } => (SpNorm::L1, a, b),
            StrategySpec::L2Sp { a, b } => (SpNorm::L2, a, b),
            _ => return Ok(None),
        };
        let reference = self.reference.as_ref().expect("SP schedules keep a reference");
        sp_penalty(tape, fwd, reference, norm, a, b).map(Some)
    }
}

/// Runs a baseline strategy on a model whose classifier has already been
/// replaced for the target task.
pub fn apply_strategy(
    model: &mut Model,
    train_set: &Dataset,
    evaluator: &mut dyn Evaluator,
    spec: &StrategySpec,
    config: &TrainConfig,
    observer: Option<&mut dyn FnMut(&MetricsRecord, &Model)>,
) -> Result<RunOutcome> {
    let mut schedule = BaselineSchedule::new(*spec, model)?;
    train::run_training(model, &mut schedule, train_set, evaluator, config, observer)
}
