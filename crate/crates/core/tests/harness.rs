mod common;

use std::fs;
use std::path::Path;

use common::tiny_config;
use gfz_core::harness::{
    cmd_finetune, cmd_pretrain, cmd_report, cmd_sweep, load_checkpoint, read_checkpoint, write_checkpoint,
    ExperimentConfig, StrategyKind, SweepAxis,
};
use gfz_core::nn::Model;
use std::sync::OnceLock;

/// Pretrained once per test binary.
fn pretrained() -> &'static (Model, f64, f64) {
    static CELL: OnceLock<(Model, f64, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let r = cmd_pretrain(&tiny_config(), &dir.path().join("m.gfz")).unwrap();
        (r.model, r.val.map, r.prior_map)
    })
}

fn with(strategy: StrategyKind) -> ExperimentConfig {
    ExperimentConfig {
        strategy,
        ..tiny_config()
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn pretraining_is_deterministic_and_beats_the_prior() {
    let (model, map, prior) = pretrained();
    assert!(map > prior, "{map} vs prior {prior}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("again.gfz");
    cmd_pretrain(&tiny_config(), &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().snapshot(), model.snapshot());
}

#[test]
fn checkpoint_round_trip_preserves_weights() {
    let (model, _, _) = pretrained();
    let mut bytes = Vec::new();
    write_checkpoint(model, &mut bytes).unwrap();
    let back = read_checkpoint(&bytes[..]).unwrap();
    assert_eq!(back.snapshot(), model.snapshot());
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn finetuning_twice_gives_identical_files() {
    let (model, _, _) = pretrained();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = cmd_finetune(&tiny_config(), model, a.path()).unwrap();
    let sb = cmd_finetune(&tiny_config(), model, b.path()).unwrap();
    assert_eq!(sa.val_map.values, sb.val_map.values);
    for f in ["epochs.csv", "layers.csv", "heatmap.csv", "pr_curves.csv", "summary.json", "config.txt"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn heatmap_rows_count_trainable_layers() {
    let (model, _, _) = pretrained();
    let dir = tempfile::tempdir().unwrap();
    cmd_finetune(&tiny_config(), model, dir.path()).unwrap();
    let epochs = String::from_utf8(read(dir.path(), "epochs.csv")).unwrap();
    let heat = String::from_utf8(read(dir.path(), "heatmap.csv")).unwrap();
    let mut ep_lines = epochs.lines();
    let col = ep_lines.next().unwrap().split(',').position(|h| h == "trainable_layers").unwrap();
    let mut heat_lines = heat.lines();
    assert_eq!(heat_lines.next().unwrap().split(',').count(), 2 + model.layer_count());
    let mut rows = 0;
    for (e, h) in ep_lines.zip(heat_lines) {
        let expected: usize = e.split(',').nth(col).unwrap().parse().unwrap();
        let sum: usize = h.split(',').skip(2).map(|v| v.parse::<usize>().unwrap()).sum();
        assert_eq!(sum, expected);
        rows += 1;
    }
    assert_eq!(rows, epochs.lines().count() - 1);
}

#[test]
fn report_relative_map_and_heatmaps() {
    let (model, _, _) = pretrained();
    let root = tempfile::tempdir().unwrap();
    let full = cmd_finetune(&with(StrategyKind::Full), model, &root.path().join("full")).unwrap();
    let single = cmd_report(&root.path().join("full")).unwrap();
    assert_eq!(single.relative.len(), 1);
    assert_eq!(single.relative[0].relative_map, 0.0);

    let gfz = cmd_finetune(&with(StrategyKind::GfzL), model, &root.path().join("gfz-l")).unwrap();
    let both = cmd_report(root.path()).unwrap();
    assert_eq!(both.relative.len(), 2);
    let f = both.relative.iter().find(|r| r.strategy == "full").unwrap();
    assert_eq!(f.relative_map, 0.0);
    let g = both.relative.iter().find(|r| r.strategy == "gfz-l").unwrap();
    assert!((g.relative_map - (gfz.val_map.mean - full.val_map.mean) / full.val_map.mean).abs() < 1e-12);
    for (label, matrix) in &both.heatmaps {
        let epochs = if label == "full" { full.epochs_run[0] } else { gfz.epochs_run[0] };
        assert_eq!(matrix.len(), model.layer_count());
        assert!(matrix.iter().all(|row| row.len() == epochs));
    }
    for f in ["relative_map.csv", "relative_map.svg", "heatmap_gfz-l.svg", "pr_full.svg"] {
        assert!(both.dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn report_without_full_run_skips_relative_map() {
    let (model, _, _) = pretrained();
    let dir = tempfile::tempdir().unwrap();
    cmd_finetune(&with(StrategyKind::Lp), model, dir.path()).unwrap();
    let out = cmd_report(dir.path()).unwrap();
    assert!(out.relative.is_empty());
    assert_eq!(out.heatmaps.len(), 1);
}

#[test]
fn sweep_over_conditioning_epochs() {
    let (model, _, _) = pretrained();
    let axis = SweepAxis::parse("eps-cond", Some("0, 1, 2, 3, 4")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let rows = cmd_sweep(&tiny_config(), model, &axis, a.path()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().map(|r| r.runs).sum::<usize>(), 15);
    let b = tempfile::tempdir().unwrap();
    cmd_sweep(&tiny_config(), model, &axis, b.path()).unwrap();
    assert_eq!(read(a.path(), "sweep.csv"), read(b.path(), "sweep.csv"));
}

#[test]
fn freezing_interval_longer_than_patience_is_rejected() {
    let (model, _, _) = pretrained();
    let mut config = tiny_config();
    config.epsilon_step = 6;
    let err = config.validate().unwrap_err().to_string();
    assert!(err.contains("epsilon_step (6)") && err.contains("patience (5)"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_finetune(&config, model, dir.path()).is_err());
    let axis = SweepAxis::parse("eps-step", Some("1, 6")).unwrap();
    assert!(cmd_sweep(&tiny_config(), model, &axis, dir.path()).is_err());
    assert!(!dir.path().join("eps-step_1").exists());
}

#[test]
fn architecture_mismatch_is_an_error() {
    let other = Model::<f32>::mini_resnet(7, &[4, 8, 16], 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_finetune(&tiny_config(), &other, dir.path()).unwrap_err();
    assert!(err.to_string().contains("width"), "{err}");
}
