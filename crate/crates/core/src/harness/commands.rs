//! The four batch commands: pretrain, finetune, sweep and report.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{mini_resnet_widths, save_checkpoint};
use super::config::{DataConfig, ExperimentConfig, Strategy, StrategyKind};
use super::report;
use crate::baselines::{apply_strategy, StrategySpec};
use crate::data::{generate_dataset, split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::gfz::run_gfz;
use crate::metrics::{mean_average_precision, pr_curve, relative_map, PredictionSet};
use crate::nn::Model;
use crate::train::{evaluate_dataset, predict, DatasetEvaluator, Evaluation, RunOutcome, TrainConfig};

/// Environment variable capping the number of runs trained at once.
pub const THREADS_ENV: &str = "GFZ_THREADS";

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn prepare_data(data: &DataConfig) -> Result<Splits> {
    let full = generate_dataset(&data.spec)?;
    let (train, val, test) = split_dataset(&full, data.split, data.spec.seed)?;
    Ok(Splits { train, val, test })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(Error::config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker threads: {e}")))
}

/// mAP of scoring every sample with the training-set prevalence.
pub fn prior_map(train: &Dataset, val: &Dataset) -> Result<f64> {
    let prior = train.prevalence();
    let scores = (0..val.len()).flat_map(|_| prior.iter().copied()).collect();
    let preds = PredictionSet::new(val.len(), val.class_count, scores, val.label_matrix())?;
    Ok(mean_average_precision(&preds)?.map)
}

#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub model: Model,
    pub outcome: RunOutcome,
    pub val: Evaluation,
    pub prior_map: f64,
}

/// Trains a MiniResNet from its seeded initialisation on the source task
/// and writes the weights to `out_path`.
pub fn cmd_pretrain(config: &ExperimentConfig, out_path: &Path) -> Result<PretrainReport> {
    config.validate()?;
    let splits = prepare_data(&config.source)?;
    let mut model = Model::mini_resnet(config.source.spec.class_count, &config.widths, config.init_seed)?;
    let mut evaluator = DatasetEvaluator {
        data: &splits.val,
        batch_size: config.eval_batch_size,
    };
    let train_config = TrainConfig {
        seed: config.init_seed,
        ..config.pretrain.clone()
    };
    info!(
        "pretraining on {} source samples ({} validation)",
        splits.train.len(),
        splits.val.len()
    );
    let outcome = apply_strategy(&mut model, &splits.train, &mut evaluator, &StrategySpec::FullFt, &train_config, None)?;
    let val = evaluate_dataset(&model, &splits.val, config.eval_batch_size)?;
    let prior = prior_map(&splits.train, &splits.val)?;
    info!(
        "source val mAP {:.4} after {} epochs (prevalence-only baseline {:.4})",
        val.map,
        outcome.records.len(),
        prior
    );
    save_checkpoint(&model, out_path)?;
    Ok(PretrainReport {
        model,
        outcome,
        val,
        prior_map: prior,
    })
}

/// Result of fine-tuning under one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: RunOutcome,
    /// Validation metrics of the final (best-restored) weights.
    pub val: Evaluation,
    pub test: Option<Evaluation>,
    /// Validation PR points per class; `None` for classes without positives.
    pub pr_curves: Vec<Option<Vec<(f64, f64)>>>,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub std: Option<f64>,
}

impl Stats {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { values, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub strategy: String,
    pub seeds: Vec<u64>,
    pub layers: Vec<String>,
    pub val_map: Stats,
    pub test_map: Option<Stats>,
    pub epochs_run: Vec<usize>,
    pub best_epoch: Vec<usize>,
    pub stopped_early: Vec<bool>,
    pub cumulative_updates: Vec<u64>,
}

pub fn check_architecture(config: &ExperimentConfig, model: &Model) -> Result<()> {
    match mini_resnet_widths(model) {
        Some(w) if w == config.widths => Ok(()),
        found => Err(Error::config(format!(
            "checkpoint architecture {} {:?} does not match configured mini-resnet widths {:?}",
            model.architecture().name(),
            found.unwrap_or_default(),
            config.widths
        ))),
    }
}

fn run_seed(config: &ExperimentConfig, pretrained: &Model, splits: &Splits, seed: u64) -> Result<SeedRun> {
    let mut model = pretrained.clone().replace_classifier(splits.train.class_count, seed)?;
    model.reset_learning_rates();
    let train_config = config.train_config(seed);
    let mut evaluator = DatasetEvaluator {
        data: &splits.val,
        batch_size: config.eval_batch_size,
    };
    let outcome = match config.resolve_strategy() {
        Strategy::Gfz(g) => run_gfz(&mut model, &splits.train, &mut evaluator, &g, &train_config, None)?,
        Strategy::Baseline(s) => apply_strategy(&mut model, &splits.train, &mut evaluator, &s, &train_config, None)?,
    };
    let preds = predict(&model, &splits.val, config.eval_batch_size)?;
    let pr_curves = (0..preds.classes())
        .map(|c| {
            let (s, l) = preds.column(c);
            pr_curve(&s, &l)
        })
        .collect();
    let val = evaluate_dataset(&model, &splits.val, config.eval_batch_size)?;
    let test = if splits.test.is_empty() {
        None
    } else {
        Some(evaluate_dataset(&model, &splits.test, config.eval_batch_size)?)
    };
    info!(
        "{} seed {seed}: val mAP {:.4} after {} epochs",
        config.strategy,
        val.map,
        outcome.records.len()
    );
    Ok(SeedRun {
        seed,
        outcome,
        val,
        test,
        pr_curves,
        model,
    })
}

/// Fine-tunes `pretrained` once per configured seed, in parallel up to
/// the `GFZ_THREADS` cap. Results come back in seed-list order.
pub fn run_seeds(config: &ExperimentConfig, pretrained: &Model, splits: &Splits) -> Result<Vec<SeedRun>> {
    config.validate()?;
    check_architecture(config, pretrained)?;
    let pool = thread_pool()?;
    pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(config, pretrained, splits, seed))
            .collect()
    })
}

pub fn summarize(config: &ExperimentConfig, runs: &[SeedRun]) -> FinetuneSummary {
    let layers = runs
        .first()
        .map(|r| r.model.layers().iter().map(|l| l.name().to_string()).collect())
        .unwrap_or_default();
    let test: Option<Vec<f64>> = runs.iter().map(|r| r.test.as_ref().map(|t| t.map)).collect();
    FinetuneSummary {
        strategy: config.strategy.name().to_string(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        layers,
        val_map: Stats::of(runs.iter().map(|r| r.val.map).collect()),
        test_map: test.map(Stats::of),
        epochs_run: runs.iter().map(|r| r.outcome.records.len()).collect(),
        best_epoch: runs.iter().map(|r| r.outcome.best_epoch).collect(),
        stopped_early: runs.iter().map(|r| r.outcome.stopped_early).collect(),
        cumulative_updates: runs
            .iter()
            .map(|r| r.outcome.records.last().map_or(0, |x| x.cumulative_updates))
            .collect(),
    }
}

fn write_run(config: &ExperimentConfig, runs: &[SeedRun], out_dir: &Path) -> Result<FinetuneSummary> {
    fs::create_dir_all(out_dir)?;
    let summary = summarize(config, runs);
    let classes = config.target.spec.class_count;
    fs::write(out_dir.join("config.txt"), config.to_string())?;
    report::write_epochs_csv(&out_dir.join("epochs.csv"), runs, classes)?;
    report::write_layers_csv(&out_dir.join("layers.csv"), runs, &summary.layers)?;
    report::write_heatmap_csv(&out_dir.join("heatmap.csv"), runs, &summary.layers)?;
    report::write_pr_csv(&out_dir.join("pr_curves.csv"), runs)?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(out_dir.join("summary.json"), json)?;
    Ok(summary)
}

/// Replaces the classifier, runs the configured strategy for every seed and
/// writes `epochs.csv`, `layers.csv`, `heatmap.csv`, `pr_curves.csv`,
/// `summary.json` and the resolved `config.txt` into `out_dir`.
pub fn cmd_finetune(config: &ExperimentConfig, pretrained: &Model, out_dir: &Path) -> Result<FinetuneSummary> {
    config.validate()?;
    check_architecture(config, pretrained)?;
    let splits = prepare_data(&config.target)?;
    let runs = run_seeds(config, pretrained, &splits)?;
    let summary = write_run(config, &runs, out_dir)?;
    info!(
        "{}: val mAP {:.4} ± {:.4} over {} seeds",
        summary.strategy,
        summary.val_map.mean,
        summary.val_map.std.unwrap_or(0.0),
        runs.len()
    );
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    EpsilonCond(Vec<usize>),
    EpsilonStep(Vec<usize>),
    Ratio(Vec<f64>),
}

impl SweepAxis {
    pub const NAMES: [&'static str; 3] = ["eps-cond", "eps-step", "ratio"];

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::EpsilonCond(_) => "eps-cond",
            SweepAxis::EpsilonStep(_) => "eps-step",
            SweepAxis::Ratio(_) => "ratio",
        }
    }

    /// Default grid for `name`, or the comma-separated `values` if given.
    pub fn parse(name: &str, values: Option<&str>) -> Result<Self> {
        fn list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>> {
            v.split(',')
                .map(|p| p.trim().parse().map_err(|_| Error::config(format!("bad sweep value '{p}'"))))
                .collect()
        }
        let axis = match (name, values) {
            ("eps-cond", None) => SweepAxis::EpsilonCond(vec![0, 3, 6, 9, 12]),
            ("eps-cond", Some(v)) => SweepAxis::EpsilonCond(list(v)?),
            ("eps-step", None) => SweepAxis::EpsilonStep(vec![1, 2, 3, 4, 5]),
            ("eps-step", Some(v)) => SweepAxis::EpsilonStep(list(v)?),
            ("ratio", None) => SweepAxis::Ratio(vec![0.2, 0.4, 0.6, 0.8]),
            ("ratio", Some(v)) => SweepAxis::Ratio(list(v)?),
            _ => {
                return Err(Error::config(format!(
                    "unknown sweep axis '{name}' (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        if axis.len() == 0 {
            return Err(Error::config("sweep needs at least one value"));
        }
        Ok(axis)
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::EpsilonCond(v) | SweepAxis::EpsilonStep(v) => v.len(),
            SweepAxis::Ratio(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One validated configuration per grid point, labelled by its value.
    pub fn points(&self, base: &ExperimentConfig) -> Result<Vec<(String, ExperimentConfig)>> {
        if !base.strategy.is_gfz() {
            return Err(Error::config(format!(
                "sweeps vary gradual-freezing settings; strategy {} has none",
                base.strategy
            )));
        }
        if matches!(self, SweepAxis::Ratio(_)) && base.strategy != StrategyKind::GfzL {
            return Err(Error::config("the ratio axis applies to gfz-l only"));
        }
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let mut c = base.clone();
            let label = match self {
                SweepAxis::EpsilonCond(v) => {
                    c.epsilon_cond = v[i];
                    v[i].to_string()
                }
                SweepAxis::EpsilonStep(v) => {
                    c.epsilon_step = v[i];
                    v[i].to_string()
                }
                SweepAxis::Ratio(v) => {
                    c.freeze_ratio = v[i];
                    v[i].to_string()
                }
            };
            c.validate()
                .map_err(|e| Error::config(format!("{} = {label}: {e}", self.name())))?;
            out.push((label, c));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub mean_val_map: f64,
    pub std_val_map: Option<f64>,
    pub runs: usize,
}

/// Fine-tunes once per grid point (every seed each time), writing each
/// point to `out_dir/<axis>_<value>/` and the table to `out_dir/sweep.csv`.
/// All points are validated before any training starts.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    pretrained: &Model,
    axis: &SweepAxis,
    out_dir: &Path,
) -> Result<Vec<SweepRow>> {
    let points = axis.points(config)?;
    check_architecture(config, pretrained)?;
    let splits = prepare_data(&config.target)?;
    let mut rows = Vec::with_capacity(points.len());
    for (label, c) in &points {
        info!("sweep {} = {label}", axis.name());
        let runs = run_seeds(c, pretrained, &splits)?;
        let summary = write_run(c, &runs, &out_dir.join(format!("{}_{label}", axis.name())))?;
        rows.push(SweepRow {
            axis: axis.name().to_string(),
            value: label.clone(),
            mean_val_map: summary.val_map.mean,
            std_val_map: summary.val_map.std,
            runs: runs.len(),
        });
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.axis.clone(),
                r.value.clone(),
                r.mean_val_map.to_string(),
                r.std_val_map.map(|s| s.to_string()).unwrap_or_default(),
                r.runs.to_string(),
            ]
        })
        .collect();
    report::write_table_csv(
        &out_dir.join("sweep.csv"),
        &["axis", "value", "mean_val_map", "std_val_map", "runs"],
        &table,
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub label: String,
    pub strategy: String,
    pub mean_val_map: f64,
    pub relative_map: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub dir: PathBuf,
    /// Empty when no run used full fine-tuning.
    pub relative: Vec<RelativeRow>,
    /// Per run: label and the layers × epochs trained matrix of its first seed.
    pub heatmaps: Vec<(String, Vec<Vec<u8>>)>,
}

fn load_summary(dir: &Path) -> Result<FinetuneSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Finds the fine-tuning runs under `run_dir`: the directory itself if it
/// holds a `summary.json`, otherwise each subdirectory that does.
fn discover(run_dir: &Path) -> Result<Vec<(String, PathBuf, FinetuneSummary)>> {
    if run_dir.join("summary.json").is_file() {
        let s = load_summary(run_dir)?;
        return Ok(vec![(s.strategy.clone(), run_dir.to_path_buf(), s)]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Format(format!("no fine-tuning runs (summary.json) under {}", run_dir.display())));
    }
    dirs.into_iter()
        .map(|d| {
            let label = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            load_summary(&d).map(|s| (label, d, s))
        })
        .collect()
}

/// Writes into `run_dir/report/`: `relative_map.csv`/`.svg` against the
/// full fine-tuning run, and per run a layers × epochs heatmap
/// (`heatmap_<label>.csv`/`.svg`) and PR points (`pr_<label>.csv`/`.svg`).
pub fn cmd_report(run_dir: &Path) -> Result<ReportOutput> {
    let runs = discover(run_dir)?;
    let out = run_dir.join("report");
    fs::create_dir_all(&out)?;

    let full = runs.iter().find(|(_, _, s)| s.strategy == StrategyKind::Full.name());
    let mut relative = Vec::new();
    match full {
        Some((_, _, f)) => {
            for (label, _, s) in &runs {
                relative.push(RelativeRow {
                    label: label.clone(),
                    strategy: s.strategy.clone(),
                    mean_val_map: s.val_map.mean,
                    relative_map: relative_map(s.val_map.mean, f.val_map.mean)?,
                });
            }
            let table: Vec<Vec<String>> = relative
                .iter()
                .map(|r| {
                    vec![
                        r.label.clone(),
                        r.strategy.clone(),
                        r.mean_val_map.to_string(),
                        r.relative_map.to_string(),
                    ]
                })
                .collect();
            report::write_table_csv(
                &out.join("relative_map.csv"),
                &["run", "strategy", "mean_val_map", "relative_map"],
                &table,
            )?;
            let bars: Vec<(String, f64)> = relative.iter().map(|r| (r.label.clone(), r.relative_map)).collect();
            fs::write(out.join("relative_map.svg"), report::relative_map_svg(&bars))?;
        }
        None => warn!("no full fine-tuning run under {}; skipping relative mAP", run_dir.display()),
    }

    let mut heatmaps = Vec::new();
    for (label, dir, _) in &runs {
        let (names, epochs, matrix) = report::read_heatmap(&dir.join("heatmap.csv"))?;
        report::write_matrix_csv(&out.join(format!("heatmap_{label}.csv")), &names, &epochs, &matrix)?;
        fs::write(out.join(format!("heatmap_{label}.svg")), report::heatmap_svg(&names, &epochs, &matrix))?;
        let curves = report::read_pr_curves(&dir.join("pr_curves.csv"))?;
        let table: Vec<Vec<String>> = curves
            .iter()
            .flat_map(|(c, pts)| pts.iter().map(move |(r, p)| vec![c.to_string(), r.to_string(), p.to_string()]))
            .collect();
        report::write_table_csv(&out.join(format!("pr_{label}.csv")), &["class", "recall", "precision"], &table)?;
        fs::write(out.join(format!("pr_{label}.svg")), report::pr_svg(&curves))?;
        heatmaps.push((label.clone(), matrix));
    }
    Ok(ReportOutput {
        dir: out,
        relative,
        heatmaps,
    })
}
