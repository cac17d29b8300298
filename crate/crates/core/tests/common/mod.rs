//! Helpers shared by the integration test binaries.
#![allow(dead_code)]

use gfz_core::autodiff::{check_gradients, GradCheckConfig, Tape, Tensor, Var};
use gfz_core::nn::{multilabel_bce, Model};
use gfz_core::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Magnitudes in [0.1, 1] with random sign: no element near a kink.
fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| r.gen_range(0.1..1.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Distinct values 0.05 apart, shuffled: pooling windows have clear maxima.
fn distinct(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 1.0).collect();
    data.shuffle(r);
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Weighted sum with fixed random weights, so every output element matters.
fn readout(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = uniform(&tape.shape(y).to_vec(), &mut rng(seed ^ 0xabc));
    let wv = tape.constant(&w);
    let p = tape.mul(y, wv)?;
    Ok(tape.sum(p))
}

fn config() -> GradCheckConfig {
    GradCheckConfig {
        step: 1e-6,
        ..GradCheckConfig::default()
    }
}

fn check<F>(name: &str, mut params: Vec<Tensor<f64>>, program: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let report = check_gradients(program, &mut params, &config()).unwrap();
    assert!(report.passed, "{name}: {report:?}");
    assert!(report.max_rel_error < 1e-3, "{name}: {report:?}");
    assert_eq!(report.non_finite, 0, "{name}");
    report.max_rel_error
}

/// Every primitive op, in f64. Returns the worst relative error seen.
pub fn check_all_ops() -> f64 {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut note = |e: f64| worst = worst.max(e);

    note(check("add", vec![uniform(&[2, 3], &mut r), uniform(&[2, 3], &mut r)], |t, v| {
        let y = t.add(v[0], v[1])?;
        readout(t, y, 1)
    }));
    note(check("sub", vec![uniform(&[2, 3], &mut r), uniform(&[2, 3], &mut r)], |t, v| {
        let y = t.sub(v[0], v[1])?;
        readout(t, y, 2)
    }));
    note(check("mul", vec![uniform(&[2, 3], &mut r), uniform(&[2, 3], &mut r)], |t, v| {
        let y = t.mul(v[0], v[1])?;
        readout(t, y, 3)
    }));
    note(check("scale", vec![uniform(&[4], &mut r)], |t, v| {
        let y = t.scale(v[0], -1.7);
        readout(t, y, 4)
    }));
    note(check("sum", vec![uniform(&[3, 2], &mut r)], |t, v| {
        let s = t.sum(v[0]);
        let sq = t.mul(s, s)?;
        Ok(sq)
    }));
    note(check("abs", vec![away_from_zero(&[5], &mut r)], |t, v| {
        let y = t.abs(v[0]);
        readout(t, y, 5)
    }));
    note(check("relu", vec![away_from_zero(&[2, 4], &mut r)], |t, v| {
        let y = t.relu(v[0]);
        readout(t, y, 6)
    }));
    note(check("sigmoid", vec![uniform(&[6], &mut r)], |t, v| {
        let y = t.sigmoid(v[0]);
        readout(t, y, 7)
    }));
    note(check("matmul", vec![uniform(&[3, 4], &mut r), uniform(&[4, 2], &mut r)], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        readout(t, y, 8)
    }));
    note(check("add_bias", vec![uniform(&[3, 4], &mut r), uniform(&[4], &mut r)], |t, v| {
        let y = t.add_bias(v[0], v[1])?;
        readout(t, y, 9)
    }));
    note(check("add_bias_conv", vec![uniform(&[2, 3, 2, 2], &mut r), uniform(&[3], &mut r)], |t, v| {
        let y = t.add_bias(v[0], v[1])?;
        readout(t, y, 10)
    }));
    for (i, (stride, pad)) in [(1, 1), (1, 0), (2, 0), (2, 1)].into_iter().enumerate() {
        note(check(
            &format!("conv2d s{stride} p{pad}"),
            vec![uniform(&[2, 3, 5, 5], &mut r), uniform(&[4, 3, 3, 3], &mut r)],
            move |t, v| {
                let y = t.conv2d(v[0], v[1], stride, pad)?;
                readout(t, y, 11 + i as u64)
            },
        ));
    }
    note(check("max_pool2d", vec![distinct(&[2, 2, 4, 4], &mut r)], |t, v| {
        let y = t.max_pool2d(v[0], 2)?;
        readout(t, y, 20)
    }));
    note(check("global_avg_pool", vec![uniform(&[2, 3, 4, 4], &mut r)], |t, v| {
        let y = t.global_avg_pool(v[0])?;
        readout(t, y, 21)
    }));
    note(check("pad_channels", vec![uniform(&[1, 2, 3, 3], &mut r)], |t, v| {
        let y = t.pad_channels(v[0], 5)?;
        readout(t, y, 22)
    }));
    note(check("reshape", vec![uniform(&[2, 3, 2], &mut r)], |t, v| {
        let y = t.reshape(v[0], vec![2, 6])?;
        readout(t, y, 23)
    }));
    let targets = Tensor::new(vec![3, 4], (0..12).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
    note(check("bce_with_logits", vec![uniform(&[3, 4], &mut r)], move |t, v| {
        let s = t.scale(v[0], 3.0);
        t.bce_with_logits(s, &targets)
    }));
    worst
}

/// Whole MiniResNet multi-label loss in f64, every parameter element.
pub fn check_mini_resnet() -> f64 {
    let model = Model::<f32>::mini_resnet(3, &[4, 6], 7).unwrap().cast::<f64>();
    let mut r = rng(2);
    let x = uniform(&[2, 3, 16, 16], &mut r);
    let y = Tensor::new(vec![2, 3], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
    let params: Vec<Tensor<f64>> = model.layers().iter().flat_map(|l| l.params().to_vec()).collect();
    check("mini_resnet", params, |t, v| {
        let bound: Vec<Vec<Var>> = v.chunks(2).map(|c| c.to_vec()).collect();
        let xv = t.constant(&x);
        let logits = model.forward_bound(t, xv, &bound)?;
        multilabel_bce(t, logits, &y)
    })
}


use gfz_core::data::{generate_dataset, Dataset, DatasetSpec};
use gfz_core::gfz::{
    compute_alpha, compute_importance, compute_rgn, run_gfz, update_learning_rates, FreezePolicy, GfzConfig,
};
use gfz_core::train::{DatasetEvaluator, Phase, TrainConfig};

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Random MiniResNet with random weights, gradients and freeze flags.
/// Roughly one layer in five gets an all-zero gradient.
pub fn random_instance(seed: u64) -> Model {
    let mut r = rng(seed);
    let blocks = r.gen_range(1..4);
    let widths: Vec<usize> = (0..blocks).map(|_| r.gen_range(1..5)).collect();
    let mut widths = widths;
    for i in 1..widths.len() {
        widths[i] = widths[i].max(widths[i - 1]);
    }
    let mut model = Model::<f32>::mini_resnet(r.gen_range(1..5), &widths, seed).unwrap();
    let scale = 10f32.powi(r.gen_range(-3..3));
    for i in 0..model.layer_count() {
        let zero = r.gen_bool(0.2);
        let layer = model.layer_mut(i).unwrap();
        for p in layer.params_mut() {
            let g: Vec<f32> = (0..p.len())
                .map(|_| if zero { 0.0 } else { r.gen_range(-1.0..1.0) * scale })
                .collect();
            p.set_grad(g).unwrap();
        }
    }
    let frozen: Vec<usize> = (0..model.layer_count()).filter(|_| r.gen_bool(0.3)).collect();
    model.set_frozen(&frozen, true).unwrap();
    model
}

/// Recomputes RGN, α, learning rates and block importance from raw buffers
/// for `instances` random models and returns the worst relative error
/// against the library.
pub fn gfz_oracle_error(instances: u64, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..instances {
        let mut model = random_instance(seed.wrapping_mul(1000) + k);
        let base_lr = 1e-4 * (1 + k % 5) as f64;
        model.set_base_lr(base_lr).unwrap();
        let trainable = model.trainable();

        let mut r_oracle = Vec::new();
        for layer in model.layers() {
            let (mut g2, mut w2) = (0.0f64, 0.0f64);
            for p in layer.params() {
                for (&w, &g) in p.data().iter().zip(p.grad().unwrap()) {
                    g2 += g as f64 * g as f64;
                    w2 += w as f64 * w as f64;
                }
            }
            r_oracle.push(g2.sqrt() / w2.sqrt().max(1e-12));
        }
        let r_lib = compute_rgn(&model);
        for (a, b) in r_lib.iter().zip(&r_oracle) {
            worst = worst.max(rel(*a, *b));
        }

        let mut r_max = 0.0f64;
        for (i, &r) in r_oracle.iter().enumerate() {
            if trainable[i] && r > r_max {
                r_max = r;
            }
        }
        let a_oracle: Vec<f64> = (0..r_oracle.len())
            .map(|i| {
                if !trainable[i] {
                    0.0
                } else if r_max == 0.0 {
                    1.0
                } else {
                    r_oracle[i] / r_max
                }
            })
            .collect();
        let a_lib = compute_alpha(&r_lib, &trainable);
        for (a, b) in a_lib.iter().zip(&a_oracle) {
            worst = worst.max(rel(*a, *b));
        }

        update_learning_rates(&mut model, &a_lib).unwrap();
        for (i, layer) in model.layers().iter().enumerate() {
            let expect = if trainable[i] { a_oracle[i] * base_lr } else { 0.0 };
            worst = worst.max(rel(layer.effective_lr(), expect));
        }

        let imp_lib = compute_importance(&r_lib, model.partition(), &trainable);
        for (j, block) in model.partition().blocks().iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0;
            for &i in block {
                if trainable[i] {
                    sum += r_oracle[i];
                    count += 1;
                }
            }
            match (imp_lib[j], count) {
                (None, 0) => {}
                (Some(v), c) if c > 0 => worst = worst.max(rel(v, sum / c as f64)),
                _ => return f64::INFINITY,
            }
        }
    }
    worst
}

pub fn tiny_dataset(classes: usize, samples: usize, seed: u64) -> Dataset {
    let mut spec = DatasetSpec::source(samples, seed);
    spec.image_size = 8;
    spec.class_count = classes;
    spec.prevalence = vec![0.4; classes];
    generate_dataset(&spec).unwrap()
}

/// Expected trainable eligible counts under the `⌈ρ·n⌉` rule, one per
/// Phase-2 epoch.
pub fn contraction(n0: usize, rho: f64, epochs: usize) -> Vec<usize> {
    let mut n = n0;
    let mut out = Vec::new();
    for _ in 0..epochs {
        out.push(n);
        if n > 1 {
            let k = ((rho * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
            n -= k;
        }
    }
    out
}

/// GFz-L (ε_cond 3, ε_step 1, ρ 0.4) on a ten-hidden-layer MLP. Checks
/// the pre-conditioning layer count, the contraction sequence, bit-identity
/// of frozen layers and max α = 1; returns a description of the first
/// violation.
pub fn schedule_invariants() -> std::result::Result<String, String> {
    let train = tiny_dataset(3, 48, 1);
    let val = tiny_dataset(3, 24, 2);
    let mut model = Model::<f32>::mlp(3 * 8 * 8, &[8; 10], 3, 4)
        .unwrap()
        .replace_classifier(3, 5)
        .unwrap();
    let epochs = 9;
    let config = TrainConfig {
        base_lr: 1e-3,
        batch_size: 16,
        max_epochs: epochs,
        patience: epochs,
        restore_best: false,
        ..TrainConfig::default()
    };
    let gfz = GfzConfig {
        policy: FreezePolicy::LayerPercent(0.4),
        epsilon_cond: 3,
        epsilon_step: 1,
        classifier_exempt: true,
    };
    let ci = model.classifier_index();
    let mut frozen_at: Vec<Option<(usize, Vec<Vec<f32>>)>> = vec![None; model.layer_count()];
    let mut violations = Vec::new();
    let mut eligible_counts = Vec::new();
    let mut observer = |rec: &gfz_core::train::MetricsRecord, m: &Model| {
        let e = rec.epoch;
        if e <= 3 && rec.trainable_layer_count != 1 {
            violations.push(format!("epoch {e} trains {} layers", rec.trainable_layer_count));
        }
        if rec.phase == Phase::GradualFreezing {
            let eligible = rec.trained.iter().enumerate().filter(|&(i, &t)| t && i != ci).count();
            eligible_counts.push(eligible);
            let alpha = rec.alpha.as_ref().expect("alpha in phase 2");
            let max = rec
                .trained
                .iter()
                .zip(alpha)
                .filter(|(&t, _)| t)
                .map(|(_, &a)| a)
                .fold(0.0f64, f64::max);
            if max != 1.0 {
                violations.push(format!("epoch {e}: max trainable alpha {max}"));
            }
        }
        let snap = m.snapshot();
        for (i, slot) in frozen_at.iter_mut().enumerate() {
            match slot {
                Some((since, values)) => {
                    if &snap[i] != values {
                        violations.push(format!("layer {i} frozen at epoch {since} changed by epoch {e}"));
                    }
                }
                None if rec.newly_frozen.contains(&i) => *slot = Some((e, snap[i].clone())),
                None => {}
            }
        }
    };
    let mut ev = DatasetEvaluator { data: &val, batch_size: 64 };
    run_gfz(&mut model, &train, &mut ev, &gfz, &config, Some(&mut observer)).map_err(|e| e.to_string())?;
    let expect = contraction(10, 0.4, epochs - 3);
    if eligible_counts != expect {
        violations.push(format!("eligible counts {eligible_counts:?}, expected {expect:?}"));
    }
    match violations.first() {
        Some(v) => Err(v.clone()),
        None => Ok(format!("eligible counts {eligible_counts:?}")),
    }
}

/// AP by brute force: for every prefix of the descending-score order (ties
/// in original order), count true positives from scratch.
pub fn ap_oracle(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    // insertion sort: stable and independent of the library's sort
    for i in 1..n {
        let mut j = i;
        while j > 0 && scores[order[j - 1]] < scores[order[j]] {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for len in 1..=n {
        let tp = order[..len].iter().filter(|&&i| labels[i] == 1).count();
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / len as f64;
        if labels[order[len - 1]] == 1 {
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    Some(ap)
}

/// AUC by comparing every positive with every negative.
pub fn auc_oracle(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut doubled = 0u64;
    for p in &pos {
        for q in &neg {
            doubled += if p > q { 2 } else if p == q { 1 } else { 0 };
        }
    }
    Some(doubled as f64 / 2.0 / (pos.len() * neg.len()) as f64)
}

/// Random scores (coarse grid, so ties are common) and labels, N ≤ 100.
pub fn random_ranking(r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = r.gen_range(1..=100);
    let levels = r.gen_range(2..30);
    let rate = r.gen_range(0.05..0.95);
    let scores = (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64).collect();
    let labels = (0..n).map(|_| r.gen_bool(rate) as u8).collect();
    (scores, labels)
}

/// Instances where the library and the oracles disagree, out of
/// `instances` rankings (AP, AUC, and the class means on 3-class sets).
pub fn metric_oracle_mismatches(instances: u64, seed: u64) -> usize {
    use gfz_core::metrics::{average_precision, mean_average_precision, mean_roc_auc, roc_auc, PredictionSet};
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let (s, l) = random_ranking(&mut r);
        if average_precision(&s, &l) != ap_oracle(&s, &l) || roc_auc(&s, &l) != auc_oracle(&s, &l) {
            bad += 1;
            continue;
        }
        let n = s.len();
        let cols: Vec<(Vec<f64>, Vec<u8>)> = (0..3).map(|_| {
            let (cs, cl) = random_ranking(&mut r);
            (cs.iter().cycle().take(n).copied().collect(), cl.iter().cycle().take(n).copied().collect())
        }).collect();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            for (cs, cl) in &cols {
                scores.push(cs[i]);
                labels.push(cl[i]);
            }
        }
        let preds = PredictionSet::new(n, 3, scores, labels).unwrap();
        let aps: Vec<f64> = cols.iter().filter_map(|(cs, cl)| ap_oracle(cs, cl)).collect();
        let aucs: Vec<f64> = cols.iter().filter_map(|(cs, cl)| auc_oracle(cs, cl)).collect();
        let map_ok = match mean_average_precision(&preds) {
            Ok(m) => !aps.is_empty() && m.map == aps.iter().sum::<f64>() / aps.len() as f64,
            Err(_) => aps.is_empty(),
        };
        let auc_ok = match mean_roc_auc(&preds) {
            Ok(m) => !aucs.is_empty() && m.mean == aucs.iter().sum::<f64>() / aucs.len() as f64,
            Err(_) => aucs.is_empty(),
        };
        if !(map_ok && auc_ok) {
            bad += 1;
        }
    }
    bad
}

use gfz_core::baselines::{apply_strategy, distance_from_reference, sp_penalty, SpNorm, SpReference, StrategySpec};
use gfz_core::train::{run_training, Evaluation, Evaluator, Schedule};

/// Final ‖ω − ω⁰‖₂ of L2-SP runs at each head-free weight `a`, with
/// the same seed, data and epoch count.
pub fn l2sp_distances(weights: &[f64]) -> Vec<f64> {
    let train = tiny_dataset(3, 64, 11);
    let val = tiny_dataset(3, 32, 12);
    let pretrained = Model::<f32>::mini_resnet(3, &[4, 6], 13).unwrap();
    weights
        .iter()
        .map(|&a| {
            let mut model = pretrained.clone().replace_classifier(3, 14).unwrap();
            let reference = SpReference::from_model(&model);
            let config = TrainConfig {
                base_lr: 1e-2,
                batch_size: 16,
                max_epochs: 6,
                patience: 6,
                restore_best: false,
                ..TrainConfig::default()
            };
            let mut ev = DatasetEvaluator { data: &val, batch_size: 64 };
            apply_strategy(&mut model, &train, &mut ev, &StrategySpec::L2Sp { a, b: 0.0 }, &config, None).unwrap();
            distance_from_reference(&model, &reference)
        })
        .collect()
}

/// Worst absolute deviation of the backpropagated L2-SP gradient from
/// `2a(ω − ω⁰)` (and `2b·ω` on the head).
pub fn l2sp_gradient_error(a: f64, b: f64) -> f64 {
    let mut model = Model::<f32>::mini_resnet(2, &[3, 4], 21).unwrap().cast::<f64>();
    let reference = SpReference::from_model(&model);
    let mut r = rng(22);
    for i in 0..model.layer_count() {
        for p in model.layer_mut(i).unwrap().params_mut() {
            for w in p.data_mut() {
                *w += r.gen_range(-0.5..0.5);
            }
        }
    }
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(&uniform(&[1, 3, 8, 8], &mut r));
    let fwd = model.forward(&mut tape, x).unwrap();
    let pen = sp_penalty(&mut tape, &fwd, &reference, SpNorm::L2, a, b).unwrap();
    let grads = tape.backward(pen).unwrap();
    let ci = model.classifier_index();
    let mut worst = 0.0f64;
    for (li, layer) in model.layers().iter().enumerate() {
        for (pi, p) in layer.params().iter().enumerate() {
            let g = grads.get(fwd.params[li][pi]).unwrap();
            for (k, (&w, &gk)) in p.data().iter().zip(g).enumerate() {
                let expect = if li == ci {
                    2.0 * b * w
                } else {
                    2.0 * a * (w - reference.layers()[li][pi].data()[k])
                };
                worst = worst.max((gk - expect).abs());
            }
        }
    }
    worst
}

/// Replays a fixed validation curve regardless of the model.
pub struct Scripted(pub Vec<f64>);

impl Evaluator for Scripted {
    fn evaluate(&mut self, _model: &Model, epoch: usize) -> Result<Evaluation> {
        Ok(Evaluation {
            map: self.0[epoch - 1],
            mean_auc: None,
            per_class_ap: vec![Some(self.0[epoch - 1])],
        })
    }
}

/// Epochs run by full fine-tuning against a scripted validation curve.
pub fn epochs_run(curve: Vec<f64>, patience: usize, max_epochs: usize) -> (usize, bool) {
    let train = tiny_dataset(2, 8, 31);
    let mut model = Model::<f32>::mlp(3 * 8 * 8, &[4], 2, 32).unwrap();
    let mut schedule: Box<dyn Schedule> = Box::new(gfz_core::baselines::BaselineSchedule::new(StrategySpec::FullFt, &model).unwrap());
    let config = TrainConfig {
        batch_size: 8,
        max_epochs,
        patience,
        augment: false,
        ..TrainConfig::default()
    };
    let out = run_training(&mut model, schedule.as_mut(), &train, &mut Scripted(curve), &config, None).unwrap();
    (out.records.len(), out.stopped_early)
}

/// A strictly improving curve runs to the 50-epoch cap; a curve that peaks
/// at epoch `b` and then stays flat stops at `b + patience`.
pub fn early_stop_contract() -> std::result::Result<String, String> {
    let rising: Vec<f64> = (1..=50).map(|e| e as f64 / 100.0).collect();
    let (n, early) = epochs_run(rising, 5, 50);
    if n != 50 || early {
        return Err(format!("improving run stopped after {n} epochs"));
    }
    for (best, patience) in [(1, 5), (7, 5), (12, 3), (20, 1)] {
        let curve: Vec<f64> = (1..=50).map(|e| e.min(best) as f64 / 100.0).collect();
        let (n, early) = epochs_run(curve, patience, 50);
        if n != best + patience || !early {
            return Err(format!("plateau after epoch {best}, patience {patience}: ran {n} epochs"));
        }
    }
    Ok("50/50 epochs improving; plateaus stop at best + patience".into())
}

/// A configuration small enough to pretrain and fine-tune in seconds.
pub const TINY_CONFIG: &str = "\
strategy = gfz-l
seeds = 0, 1, 2
model.widths = 4, 8
train.base_lr = 0.003
train.batch_size = 16
train.max_epochs = 6
train.patience = 5
pretrain.base_lr = 0.003
pretrain.batch_size = 32
pretrain.max_epochs = 8
pretrain.patience = 8
source.samples = 300
source.image_size = 16
target.samples = 160
target.image_size = 16
";

pub fn tiny_config() -> gfz_core::harness::ExperimentConfig {
    gfz_core::harness::ExperimentConfig::parse(TINY_CONFIG).unwrap()
}
