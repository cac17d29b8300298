use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
seeds = 0, 1
model.widths = 4, 8
train.base_lr = 0.003
train.batch_size = 16
train.max_epochs = 4
train.patience = 5
pretrain.base_lr = 0.003
pretrain.batch_size = 32
pretrain.max_epochs = 3
pretrain.patience = 3
source.samples = 200
source.image_size = 16
target.samples = 120
target.image_size = 16
";

fn gfz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfz"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = gfz(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pretrain_finetune_report() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("tiny.conf");
    fs::write(&conf, TINY).unwrap();
    let ckpt = dir.path().join("model.gfz");
    let runs = dir.path().join("runs");

    let out = ok(&["pretrain", "--config", s(&conf), "--out", s(&ckpt)]);
    assert!(out.contains("source val mAP"), "{out}");
    assert!(ckpt.is_file());

    for strategy in ["full", "gfz-l"] {
        let out = ok(&[
            "finetune",
            "--config",
            s(&conf),
            "--strategy",
            strategy,
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(&runs.join(strategy)),
        ]);
        assert!(out.starts_with(&format!("{strategy}: val mAP")), "{out}");
    }
    let out = ok(&["report", "--out", s(&runs)]);
    assert!(out.contains("full") && out.contains("relative +0.00%"), "{out}");
    assert!(runs.join("report/heatmap_gfz-l.svg").is_file());
}

#[test]
fn rejects_long_freezing_interval_in_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("tiny.conf");
    fs::write(&conf, TINY).unwrap();
    let out = gfz(&[
        "sweep",
        "--config",
        s(&conf),
        "--checkpoint",
        s(&dir.path().join("missing.gfz")),
        "--axis",
        "eps-step",
        "--values",
        "1,6",
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("must be less than or equal to the patience (5)"), "{err}");
}

#[test]
fn rejects_unknown_strategy() {
    let out = gfz(&["finetune", "--strategy", "bogus", "--checkpoint", "x", "--out", "y"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown strategy 'bogus'"), "{err}");
}
