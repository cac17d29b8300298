//! Multi-label evaluation: per-class average precision, mAP, PR curves,
//! ROC-AUC and relative mAP. All values are fractions in `[0, 1]`.

use log::warn;

use crate::error::{Error, Result};

/// Sigmoid scores and binary labels for `samples × classes`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    samples: usize,
    classes: usize,
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl PredictionSet {
    pub fn new(samples: usize, classes: usize, scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != samples * classes || labels.len() != samples * classes {
            return Err(Error::shape(
                "prediction_set",
                format!(
                    "{samples}×{classes} needs {} entries, got {} scores and {} labels",
                    samples * classes,
                    scores.len(),
                    labels.len()
                ),
            ));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::config(format!("score {s} outside [0, 1]")));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::config("labels must be 0 or 1"));
        }
        Ok(Self {
            samples,
            classes,
            scores,
            labels,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Scores and labels of one class.
    pub fn column(&self, class: usize) -> (Vec<f64>, Vec<u8>) {
        (0..self.samples)
            .map(|n| (self.scores[n * self.classes + class], self.labels[n * self.classes + class]))
            .unzip()
    }
}

/// Indices by descending score; equal scores keep their original order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// `Σ (R_n − R_{n−1}) · P_n` over the ranked list, one threshold per rank.
/// `None` when there are no positive labels.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut prev_recall = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
            let recall = tp as f64 / positives as f64;
            let precision = tp as f64 / (rank + 1) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// `None` for classes without positives, which are left out of the mean.
    pub per_class: Vec<Option<f64>>,
}

pub fn mean_average_precision(preds: &PredictionSet) -> Result<MapReport> {
    let per_class: Vec<Option<f64>> = (0..preds.classes)
        .map(|c| {
            let (s, l) = preds.column(c);
            let ap = average_precision(&s, &l);
            if ap.is_none() {
                warn!("class {c} has no positive labels; skipped in mAP");
            }
            ap
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedClasses);
    }
    Ok(MapReport {
        map: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
    })
}

/// `(recall, precision)` after each ranked prefix, preceded by the `(0, 1)`
/// anchor.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Option<Vec<(f64, f64)>> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let mut points = vec![(0.0, 1.0)];
    let mut tp = 0usize;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        tp += (labels[i] == 1) as usize;
        points.push((tp as f64 / positives as f64, tp as f64 / (rank + 1) as f64));
    }
    Some(points)
}

/// Mann–Whitney AUC with average ranks for ties. `None` unless both label
/// values occur.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // ranks are doubled to stay integral: tie group [i, j) gets 2·avg = i + j + 1
    let mut doubled_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        doubled_rank_sum += pos_in_group * (i + j + 1) as u64;
        i = j;
    }
    let doubled_u = doubled_rank_sum - (pos * (pos + 1)) as u64;
    Some(doubled_u as f64 / 2.0 / (pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucReport {
    pub mean: f64,
    pub per_class: Vec<Option<f64>>,
}

pub fn mean_roc_auc(preds: &PredictionSet) -> Result<AucReport> {
    let per_class: Vec<Option<f64>> = (0..preds.classes)
        .map(|c| {
            let (s, l) = preds.column(c);
            let auc = roc_auc(&s, &l);
            if auc.is_none() {
                warn!("class {c} lacks positives or negatives; skipped in mean AUC");
            }
            auc
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedClasses);
    }
    Ok(AucReport {
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
    })
}

/// `(map_t − map_full) / map_full`.
pub fn relative_map(map_t: f64, map_full: f64) -> Result<f64> {
    if !(map_full > 0.0) {
        return Err(Error::config(format!("reference mAP must be positive, got {map_full}")));
    }
    Ok((map_t - map_full) / map_full)
}
