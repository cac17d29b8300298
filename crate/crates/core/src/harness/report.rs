//! CSV and SVG artifacts. CSVs always carry a header row, `\n` line endings
//! and `.` decimals, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::commands::SeedRun;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per seed and epoch.
pub fn write_epochs_csv(path: &Path, runs: &[SeedRun], class_count: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = [
        "seed",
        "epoch",
        "phase",
        "train_loss",
        "val_map",
        "val_auc",
        "trainable_layers",
        "cumulative_updates",
        "newly_frozen",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..class_count).map(|c| format!("ap_{c}")));
    w.write_record(&header)?;
    for run in runs {
        for r in &run.outcome.records {
            let frozen: Vec<String> = r.newly_frozen.iter().map(|i| i.to_string()).collect();
            let mut row = vec![
                run.seed.to_string(),
                r.epoch.to_string(),
                r.phase.name().to_string(),
                r.train_loss.to_string(),
                r.val_map.to_string(),
                opt(r.val_auc),
                r.trainable_layer_count.to_string(),
                r.cumulative_updates.to_string(),
                frozen.join(";"),
            ];
            row.extend(r.per_class_ap.iter().map(|&ap| opt(ap)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-layer state for every seed and epoch.
pub fn write_layers_csv(path: &Path, runs: &[SeedRun], layer_names: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "epoch", "layer", "name", "trained", "rgn", "alpha", "effective_lr"])?;
    for run in runs {
        for r in &run.outcome.records {
            for (i, name) in layer_names.iter().enumerate() {
                w.write_record([
                    run.seed.to_string(),
                    r.epoch.to_string(),
                    i.to_string(),
                    name.clone(),
                    (r.trained[i] as u8).to_string(),
                    r.rgn[i].to_string(),
                    opt(r.alpha.as_ref().map(|a| a[i])),
                    r.effective_lr[i].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Trained flags: one row per seed and epoch, one column per layer.
pub fn write_heatmap_csv(path: &Path, runs: &[SeedRun], layer_names: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["seed".to_string(), "epoch".to_string()];
    header.extend(layer_names.iter().cloned());
    w.write_record(&header)?;
    for run in runs {
        for r in &run.outcome.records {
            let mut row = vec![run.seed.to_string(), r.epoch.to_string()];
            row.extend(r.trained.iter().map(|&t| (t as u8).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_pr_csv(path: &Path, runs: &[SeedRun]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "class", "recall", "precision"])?;
    for run in runs {
        for (c, curve) in run.pr_curves.iter().enumerate() {
            for &(r, p) in curve.iter().flatten() {
                w.write_record([run.seed.to_string(), c.to_string(), r.to_string(), p.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Heatmap rows of the first seed in the file, as `(layer names, epochs,
/// matrix[layer][epoch])`.
pub fn read_heatmap(path: &Path) -> Result<(Vec<String>, Vec<usize>, Vec<Vec<u8>>)> {
    let mut r = reader(path)?;
    let names: Vec<String> = r.headers()?.iter().skip(2).map(str::to_string).collect();
    let mut epochs = Vec::new();
    let mut matrix = vec![Vec::new(); names.len()];
    let mut first_seed = None;
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::Format(format!("{}: malformed heatmap row", path.display()));
        let seed = rec.get(0).ok_or_else(bad)?.to_string();
        if *first_seed.get_or_insert_with(|| seed.clone()) != seed {
            break;
        }
        epochs.push(rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?);
        for (i, row) in matrix.iter_mut().enumerate() {
            row.push(rec.get(i + 2).and_then(|v| v.parse().ok()).ok_or_else(bad)?);
        }
    }
    Ok((names, epochs, matrix))
}

/// PR points of the first seed in the file, grouped by class.
pub fn read_pr_curves(path: &Path) -> Result<Vec<(usize, Vec<(f64, f64)>)>> {
    let mut r = reader(path)?;
    let mut out: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    let mut first_seed = None;
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::Format(format!("{}: malformed PR row", path.display()));
        let seed = rec.get(0).ok_or_else(bad)?.to_string();
        if *first_seed.get_or_insert_with(|| seed.clone()) != seed {
            break;
        }
        let class: usize = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let point = (
            rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
            rec.get(3).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
        );
        match out.last_mut() {
            Some((c, pts)) if *c == class => pts.push(point),
            _ => out.push((class, vec![point])),
        }
    }
    Ok(out)
}

pub fn write_matrix_csv(path: &Path, names: &[String], epochs: &[usize], matrix: &[Vec<u8>]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["layer".to_string()];
    header.extend(epochs.iter().map(|e| e.to_string()));
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

/// Trained (dark) and frozen (light) cells, layers top to bottom.
pub fn heatmap_svg(names: &[String], epochs: &[usize], matrix: &[Vec<u8>]) -> String {
    let (cell, left, top) = (14, 130, 20);
    let width = left + cell * epochs.len() + 10;
    let height = top + cell * names.len() + 30;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    for (li, (name, row)) in names.iter().zip(matrix).enumerate() {
        let y = top + li * cell;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 4, y + cell - 3, escape(name));
        for (ei, &v) in row.iter().enumerate() {
            let fill = if v == 1 { "#08306b" } else { "#deebf7" };
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"#ffffff\"/>",
                left + ei * cell
            );
        }
    }
    for (ei, e) in epochs.iter().enumerate() {
        if ei % 5 == 0 || ei + 1 == epochs.len() {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{e}</text>",
                left + ei * cell + cell / 2,
                top + cell * names.len() + 14
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars of relative mAP in percent, zero line in the middle.
pub fn relative_map_svg(rows: &[(String, f64)]) -> String {
    let (bar, left, half) = (18, 110, 200.0);
    let scale = rows.iter().map(|r| r.1.abs()).fold(1e-6, f64::max);
    let width = left + 2 * half as usize + 60;
    let height = bar * rows.len() + 20;
    let mid = left as f64 + half;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    let _ = writeln!(s, "<line x1=\"{mid}\" y1=\"0\" x2=\"{mid}\" y2=\"{height}\" stroke=\"#000000\"/>");
    for (i, (label, v)) in rows.iter().enumerate() {
        let y = 10 + i * bar;
        let len = v.abs() / scale * half;
        let x = if *v < 0.0 { mid - len } else { mid };
        let fill = if *v < 0.0 { "#d62728" } else { "#2ca02c" };
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 4, y + bar - 6, escape(label));
        let _ = writeln!(s, "<rect x=\"{x:.2}\" y=\"{y}\" width=\"{len:.2}\" height=\"{}\" fill=\"{fill}\"/>", bar - 4);
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\">{:+.2}%</text>",
            mid + half + 4.0,
            y + bar - 6,
            v * 100.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One polyline per class in the unit square.
pub fn pr_svg(curves: &[(usize, Vec<(f64, f64)>)]) -> String {
    let (size, pad) = (300.0, 30.0);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{w}\" font-family=\"sans-serif\" font-size=\"10\">\n",
        w = size + 2.0 * pad
    );
    let _ = writeln!(
        s,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#000000\"/>"
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">recall</text>", pad + size / 2.0, size + 2.0 * pad - 8.0);
    let _ = writeln!(s, "<text x=\"10\" y=\"{}\">precision</text>", pad - 10.0);
    for (class, pts) in curves {
        let path: Vec<String> = pts
            .iter()
            .map(|(r, p)| format!("{:.2},{:.2}", pad + r * size, pad + (1.0 - p) * size))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{}\" points=\"{}\"/>",
            PALETTE[class % PALETTE.len()],
            path.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}
