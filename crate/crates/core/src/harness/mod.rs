//! Experiment configuration, checkpoints, reports and the batch commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod report;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use commands::{
    cmd_finetune, cmd_pretrain, cmd_report, cmd_sweep, prepare_data, run_seeds, FinetuneSummary, PretrainReport,
    ReportOutput, SeedRun, Splits, Stats, SweepAxis, SweepRow,
};
pub use config::{DataConfig, ExperimentConfig, Strategy, StrategyKind};
