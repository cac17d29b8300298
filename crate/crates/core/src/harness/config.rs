//! Experiment configuration as a flat `key = value` file.
//!
//! ```text
//! # comments start with '#'
//! strategy = gfz-l
//! seeds = 0, 1, 2
//! gfz.epsilon_step = 1
//! target.prevalence = 0.55, 0.05, 0.55, 0.02, 0.03, 0.05, 0.06
//! ```
//!
//! Every key is optional; anything left out keeps its default. Unknown and
//! repeated keys are errors.

use std::collections::HashSet;
use std::fmt::{self, Display};
use std::path::Path;
use std::str::FromStr;

use crate::baselines::{StrategySpec, DEFAULT_SP_A, DEFAULT_SP_B};
use crate::data::{Cooccurrence, DatasetSpec};
use crate::error::{Error, Result};
use crate::gfz::{FreezePolicy, GfzConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    GfzL,
    GfzB1,
    GfzB2,
    Full,
    Lp,
    LpFt,
    GLf,
    GFl,
    L1Sp,
    L2Sp,
    AutoRgn,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 11] = [
        StrategyKind::GfzL,
        StrategyKind::GfzB1,
        StrategyKind::GfzB2,
        StrategyKind::Full,
        StrategyKind::Lp,
        StrategyKind::LpFt,
        StrategyKind::GLf,
        StrategyKind::GFl,
        StrategyKind::L1Sp,
        StrategyKind::L2Sp,
        StrategyKind::AutoRgn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::GfzL => "gfz-l",
            StrategyKind::GfzB1 => "gfz-b1",
            StrategyKind::GfzB2 => "gfz-b2",
            StrategyKind::Full => "full",
            StrategyKind::Lp => "lp",
            StrategyKind::LpFt => "lp-ft",
            StrategyKind::GLf => "g-lf",
            StrategyKind::GFl => "g-fl",
            StrategyKind::L1Sp => "l1sp",
            StrategyKind::L2Sp => "l2sp",
            StrategyKind::AutoRgn => "auto-rgn",
        }
    }

    pub fn is_gfz(self) -> bool {
        matches!(self, StrategyKind::GfzL | StrategyKind::GfzB1 | StrategyKind::GfzB2)
    }
}

impl Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
                Error::config(format!("unknown strategy '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// A strategy with its parameters filled in from the configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Gfz(GfzConfig),
    Baseline(StrategySpec),
}

/// Synthetic dataset plus the fractions used to split it.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub spec: DatasetSpec,
    /// Train, validation and test fractions.
    pub split: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: StrategyKind,
    pub seeds: Vec<u64>,
    pub epsilon_cond: usize,
    pub epsilon_step: usize,
    pub freeze_ratio: f64,
    pub classifier_freeze_exempt: bool,
    pub lp_epochs: usize,
    pub unfreeze_step: usize,
    pub sp_a: f64,
    pub sp_b: f64,
    /// Fine-tuning loop settings; the seed is taken from `seeds` per run.
    pub train: TrainConfig,
    pub pretrain: TrainConfig,
    pub eval_batch_size: usize,
    pub widths: Vec<usize>,
    pub init_seed: u64,
    pub source: DataConfig,
    pub target: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::GfzL,
            seeds: vec![0, 1, 2],
            epsilon_cond: 3,
            epsilon_step: 1,
            freeze_ratio: 0.4,
            classifier_freeze_exempt: true,
            lp_epochs: 3,
            unfreeze_step: 1,
            sp_a: DEFAULT_SP_A,
            sp_b: DEFAULT_SP_B,
            train: TrainConfig::default(),
            pretrain: TrainConfig {
                base_lr: 2e-3,
                max_epochs: 40,
                patience: 40,
                ..TrainConfig::default()
            },
            eval_batch_size: 256,
            widths: vec![8, 16, 32],
            init_seed: 0,
            source: DataConfig {
                spec: DatasetSpec::source(3000, 11),
                split: (0.8, 0.2, 0.0),
            },
            target: DataConfig {
                spec: DatasetSpec::target(800, 12),
                split: (0.5, 0.25, 0.25),
            },
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_triple(key: &str, v: &str) -> Result<(f64, f64, f64)> {
    match parse_list::<f64>(key, v)?[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::config(format!("{key}: expected three fractions"))),
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Per-dataset keys whose final value depends on other keys.
#[derive(Default)]
struct PendingData {
    classes: Option<usize>,
    prevalence: Option<Vec<f64>>,
}

impl PendingData {
    fn finish(self, name: &str, spec: &mut DatasetSpec) -> Result<()> {
        let classes = self.classes.unwrap_or(spec.class_count);
        spec.prevalence = match self.prevalence {
            Some(p) if p.len() == 1 => vec![p[0]; classes],
            Some(p) if p.len() == classes => p,
            Some(p) => {
                return Err(Error::config(format!(
                    "{name}.prevalence has {} entries for {classes} classes",
                    p.len()
                )))
            }
            None if classes <= spec.prevalence.len() => spec.prevalence[..classes].to_vec(),
            None => {
                return Err(Error::config(format!(
                    "{name}.classes = {classes} needs an explicit {name}.prevalence"
                )))
            }
        };
        spec.class_count = classes;
        Ok(())
    }
}

fn set_data(data: &mut DataConfig, pending: &mut PendingData, key: &str, field: &str, v: &str) -> Result<bool> {
    let spec = &mut data.spec;
    match field {
        "samples" => spec.sample_count = parse_num(key, v)?,
        "seed" => spec.seed = parse_num(key, v)?,
        "image_size" => spec.image_size = parse_num(key, v)?,
        "classes" => pending.classes = Some(parse_num(key, v)?),
        "prevalence" => pending.prevalence = Some(parse_list(key, v)?),
        "cooccurrence" => {
            spec.cooccurrence = if v == "none" {
                None
            } else {
                match parse_list::<f64>(key, v)?[..] {
                    [a, b, p] if a.fract() == 0.0 && b.fract() == 0.0 && a >= 0.0 && b >= 0.0 => {
                        Some(Cooccurrence {
                            classes: (a as usize, b as usize),
                            joint: p,
                        })
                    }
                    _ => return Err(Error::config(format!("{key}: expected 'none' or 'a, b, probability'"))),
                }
            }
        }
        "hue" => spec.shift.hue_degrees = parse_num(key, v)?,
        "brightness" => spec.shift.brightness = parse_num(key, v)?,
        "noise" => spec.shift.noise_sigma = parse_num(key, v)?,
        "texture" => spec.shift.texture = parse_num(key, v)?,
        "split" => data.split = parse_triple(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn set_train(cfg: &mut TrainConfig, key: &str, field: &str, v: &str) -> Result<bool> {
    match field {
        "base_lr" => cfg.base_lr = parse_num(key, v)?,
        "batch_size" => cfg.batch_size = parse_num(key, v)?,
        "max_epochs" => cfg.max_epochs = parse_num(key, v)?,
        "patience" => cfg.patience = parse_num(key, v)?,
        "augment" => cfg.augment = parse_bool(key, v)?,
        "restore_best" => cfg.restore_best = parse_bool(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let mut source = PendingData::default();
        let mut target = PendingData::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value'", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!("line {}: '{key}' is set twice", n + 1)));
            }
            let known = cfg
                .set(key, value, &mut source, &mut target)
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
            if !known {
                return Err(Error::config(format!("line {}: unknown key '{key}'", n + 1)));
            }
        }
        source.finish("source", &mut cfg.source.spec)?;
        target.finish("target", &mut cfg.target.spec)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, v: &str, source: &mut PendingData, target: &mut PendingData) -> Result<bool> {
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        match (section, field) {
            ("", "strategy") => self.strategy = v.parse()?,
            ("", "seeds") => self.seeds = parse_list(key, v)?,
            ("gfz", "epsilon_cond") => self.epsilon_cond = parse_num(key, v)?,
            ("gfz", "epsilon_step") => self.epsilon_step = parse_num(key, v)?,
            ("gfz", "ratio") => self.freeze_ratio = parse_num(key, v)?,
            ("gfz", "classifier_exempt") => self.classifier_freeze_exempt = parse_bool(key, v)?,
            ("lp_ft", "lp_epochs") => self.lp_epochs = parse_num(key, v)?,
            ("unfreeze", "step_epochs") => self.unfreeze_step = parse_num(key, v)?,
            ("sp", "a") => self.sp_a = parse_num(key, v)?,
            ("sp", "b") => self.sp_b = parse_num(key, v)?,
            ("eval", "batch_size") => self.eval_batch_size = parse_num(key, v)?,
            ("model", "widths") => self.widths = parse_list(key, v)?,
            ("model", "seed") => self.init_seed = parse_num(key, v)?,
            ("train", f) => return set_train(&mut self.train, key, f, v),
            ("pretrain", f) => return set_train(&mut self.pretrain, key, f, v),
            ("source", f) => return set_data(&mut self.source, source, key, f, v),
            ("target", f) => return set_data(&mut self.target, target, key, f, v),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn gfz_config(&self, policy: FreezePolicy) -> GfzConfig {
        GfzConfig {
            policy,
            epsilon_cond: self.epsilon_cond,
            epsilon_step: self.epsilon_step,
            classifier_exempt: self.classifier_freeze_exempt,
        }
    }

    pub fn resolve_strategy(&self) -> Strategy {
        match self.strategy {
            StrategyKind::GfzL => Strategy::Gfz(self.gfz_config(FreezePolicy::LayerPercent(self.freeze_ratio))),
            StrategyKind::GfzB1 => Strategy::Gfz(self.gfz_config(FreezePolicy::BlockOne)),
            StrategyKind::GfzB2 => Strategy::Gfz(self.gfz_config(FreezePolicy::BlockOneAveragedLr)),
            StrategyKind::Full => Strategy::Baseline(StrategySpec::FullFt),
            StrategyKind::Lp => Strategy::Baseline(StrategySpec::LinearProbe),
            StrategyKind::LpFt => Strategy::Baseline(StrategySpec::LpFt {
                lp_epochs: self.lp_epochs,
            }),
            StrategyKind::GLf => Strategy::Baseline(StrategySpec::GradualUnfreezeLastFirst {
                step_epochs: self.unfreeze_step,
            }),
            StrategyKind::GFl => Strategy::Baseline(StrategySpec::GradualUnfreezeFirstLast {
                step_epochs: self.unfreeze_step,
            }),
            StrategyKind::L1Sp => Strategy::Baseline(StrategySpec::L1Sp { a: self.sp_a, b: self.sp_b }),
            StrategyKind::L2Sp => Strategy::Baseline(StrategySpec::L2Sp { a: self.sp_a, b: self.sp_b }),
            StrategyKind::AutoRgn => Strategy::Baseline(StrategySpec::AutoRgn),
        }
    }

    /// Fine-tuning loop settings for one seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        let mut uniq = self.seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config("model.widths must be a nonempty list of positive widths"));
        }
        if self.eval_batch_size == 0 {
            return Err(Error::config("eval.batch_size must be at least 1"));
        }
        self.train.validate()?;
        self.pretrain.validate()?;
        for (name, data) in [("source", &self.source), ("target", &self.target)] {
            data.spec
                .validate()
                .map_err(|e| Error::config(format!("{name}: {e}")))?;
            let (a, b, c) = data.split;
            if !(a > 0.0 && b > 0.0 && c >= 0.0 && (a + b + c - 1.0).abs() < 1e-9) {
                return Err(Error::config(format!(
                    "{name}.split needs positive train and validation fractions summing to 1 with test, got {a}, {b}, {c}"
                )));
            }
        }
        match self.resolve_strategy() {
            Strategy::Gfz(g) => {
                g.validate()?;
                if g.epsilon_step > self.train.patience {
                    return Err(Error::config(format!(
                        "gfz.epsilon_step ({}) must be less than or equal to the patience ({}); \
                         a longer freezing interval lets early stopping end the run before the next freeze",
                        g.epsilon_step, self.train.patience
                    )));
                }
            }
            Strategy::Baseline(s) => s.validate()?,
        }
        Ok(())
    }
}

fn write_data(f: &mut fmt::Formatter<'_>, name: &str, d: &DataConfig) -> fmt::Result {
    let s = &d.spec;
    writeln!(f, "{name}.samples = {}", s.sample_count)?;
    writeln!(f, "{name}.seed = {}", s.seed)?;
    writeln!(f, "{name}.image_size = {}", s.image_size)?;
    writeln!(f, "{name}.classes = {}", s.class_count)?;
    writeln!(f, "{name}.prevalence = {}", join(&s.prevalence))?;
    match &s.cooccurrence {
        Some(c) => writeln!(f, "{name}.cooccurrence = {}, {}, {}", c.classes.0, c.classes.1, c.joint)?,
        None => writeln!(f, "{name}.cooccurrence = none")?,
    }
    writeln!(f, "{name}.hue = {}", s.shift.hue_degrees)?;
    writeln!(f, "{name}.brightness = {}", s.shift.brightness)?;
    writeln!(f, "{name}.noise = {}", s.shift.noise_sigma)?;
    writeln!(f, "{name}.texture = {}", s.shift.texture)?;
    writeln!(f, "{name}.split = {}, {}, {}", d.split.0, d.split.1, d.split.2)
}

fn write_train(f: &mut fmt::Formatter<'_>, name: &str, t: &TrainConfig) -> fmt::Result {
    writeln!(f, "{name}.base_lr = {}", t.base_lr)?;
    writeln!(f, "{name}.batch_size = {}", t.batch_size)?;
    writeln!(f, "{name}.max_epochs = {}", t.max_epochs)?;
    writeln!(f, "{name}.patience = {}", t.patience)?;
    writeln!(f, "{name}.augment = {}", t.augment)?;
    writeln!(f, "{name}.restore_best = {}", t.restore_best)
}

/// Writes every key, so the output parses back to an equal configuration.
impl Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "strategy = {}", self.strategy)?;
        writeln!(f, "seeds = {}", join(&self.seeds))?;
        writeln!(f, "gfz.epsilon_cond = {}", self.epsilon_cond)?;
        writeln!(f, "gfz.epsilon_step = {}", self.epsilon_step)?;
        writeln!(f, "gfz.ratio = {}", self.freeze_ratio)?;
        writeln!(f, "gfz.classifier_exempt = {}", self.classifier_freeze_exempt)?;
        writeln!(f, "lp_ft.lp_epochs = {}", self.lp_epochs)?;
        writeln!(f, "unfreeze.step_epochs = {}", self.unfreeze_step)?;
        writeln!(f, "sp.a = {}", self.sp_a)?;
        writeln!(f, "sp.b = {}", self.sp_b)?;
        write_train(f, "train", &self.train)?;
        write_train(f, "pretrain", &self.pretrain)?;
        writeln!(f, "eval.batch_size = {}", self.eval_batch_size)?;
        writeln!(f, "model.widths = {}", join(&self.widths))?;
        writeln!(f, "model.seed = {}", self.init_seed)?;
        write_data(f, "source", &self.source)?;
        write_data(f, "target", &self.target)
    }
}
