//! Gradual-freezing fine-tuning engine.
//!
//! The crate bundles everything needed to pretrain a small residual CNN on a
//! synthetic source task, transfer it to a shifted multi-label target task,
//! and compare adaptive freezing schedules against standard fine-tuning
//! baselines:
//!
//! - [`autodiff`]: define-by-run reverse-mode differentiation over dense tensors
//! - [`nn`]: layers, block partitions, the MiniResNet/MLP models and the BCE loss
//! - [`optim`]: Adam with per-layer learning rates that honours freeze flags
//! - [`gfz`]: relative gradient norms, learning-rate weights, importance
//!   ranking and the gradual-freezing schedule
//! - [`baselines`]: full fine-tuning, linear probing, gradual unfreezing,
//!   L1/L2-SP and Auto-RGN
//! - [`metrics`]: AP, mAP, PR curves, ROC-AUC, relative mAP
//! - [`data`]: synthetic glyph datasets with domain shift and augmentation
//! - [`harness`]: experiment configuration, checkpoints, reports and commands

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod error;
pub mod gfz;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
