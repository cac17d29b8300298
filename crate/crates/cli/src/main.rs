use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gfz_core::harness::{self, ExperimentConfig, StrategyKind, SweepAxis};

#[derive(Parser)]
#[command(name = "gfz", version, about = "Gradual-freezing fine-tuning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (`key = value` lines); defaults if omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Fine-tuning strategy, overriding the configuration.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<StrategyKind>,
    /// Seed to run; repeat for several. Overrides the configuration.
    #[arg(long = "seed", value_name = "N")]
    seeds: Vec<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a MiniResNet on the source task and save a checkpoint.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file to write.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Fine-tune a pretrained checkpoint on the target task.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Directory for CSV and JSON outputs.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Repeat fine-tuning over a grid of gradual-freezing settings.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// eps-cond, eps-step or ratio.
        #[arg(long)]
        axis: String,
        /// Comma-separated grid; the axis default if omitted.
        #[arg(long)]
        values: Option<String>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Render relative mAP, heatmaps and PR curves for finished runs.
    Report {
        /// A fine-tuning output directory, or a directory of them.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: gfz_core::Error| e.to_string())
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.strategy {
        config.strategy = s;
    }
    if !common.seeds.is_empty() {
        config.seeds = common.seeds.clone();
    }
    config.validate()?;
    Ok(config)
}

fn load_model(path: &Path) -> Result<gfz_core::nn::Model> {
    harness::load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain { common, out } => {
            let config = load_config(&common)?;
            let report = harness::cmd_pretrain(&config, &out)?;
            println!(
                "source val mAP {:.4} (prevalence-only {:.4}); checkpoint written to {}",
                report.val.map,
                report.prior_map,
                out.display()
            );
        }
        Command::Finetune { common, checkpoint, out } => {
            let config = load_config(&common)?;
            let model = load_model(&checkpoint)?;
            let s = harness::cmd_finetune(&config, &model, &out)?;
            match s.val_map.std {
                Some(std) => println!("{}: val mAP {:.4} ± {:.4}", s.strategy, s.val_map.mean, std),
                None => println!("{}: val mAP {:.4}", s.strategy, s.val_map.mean),
            }
        }
        Command::Sweep {
            common,
            checkpoint,
            axis,
            values,
            out,
        } => {
            let config = load_config(&common)?;
            let axis = SweepAxis::parse(&axis, values.as_deref())?;
            axis.points(&config)?;
            let model = load_model(&checkpoint)?;
            for row in harness::cmd_sweep(&config, &model, &axis, &out)? {
                println!(
                    "{} = {:<6} val mAP {:.4} ± {:.4} ({} runs)",
                    row.axis,
                    row.value,
                    row.mean_val_map,
                    row.std_val_map.unwrap_or(0.0),
                    row.runs
                );
            }
        }
        Command::Report { out } => {
            let report = harness::cmd_report(&out)?;
            for r in &report.relative {
                println!("{:<16} mAP {:.4} relative {:+.2}%", r.label, r.mean_val_map, r.relative_map * 100.0);
            }
            println!("artifacts in {}", report.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
