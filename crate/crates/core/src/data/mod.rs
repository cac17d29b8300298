//! Synthetic multi-label glyph datasets.
//!
//! Each class is a glyph shape; an image shows the glyphs of its positive
//! labels over a textured background. A source task (all shapes, balanced,
//! plain background) is used for pretraining; the target task (skewed
//! prevalence, shifted colours, optionally a swapped background) for
//! fine-tuning.

mod augment;
mod container;
pub mod render;
mod shift;

pub use augment::{augment, AugmentOp};
pub use container::{load_gfzd, read_gfzd, save_gfzd, write_gfzd};
pub use shift::{apply_domain_shift, DomainShift};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::seed;
use render::MAX_CLASSES;

/// Per-tool share of frames in the reference surgical-video training set.
pub const TOOL_PREVALENCE: [f64; 7] = [0.5559, 0.0481, 0.5586, 0.0176, 0.0324, 0.0532, 0.0621];

const PIXEL_MEAN: f32 = 0.5;
const PIXEL_STD: f32 = 0.25;

/// Extra joint appearance of two classes. With probability `joint` both are
/// present; otherwise each is drawn independently at a reduced rate, so the
/// marginal prevalence is unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub classes: (usize, usize),
    pub joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// Side length of the square RGB images.
    pub image_size: usize,
    pub class_count: usize,
    pub prevalence: Vec<f64>,
    pub cooccurrence: Option<Cooccurrence>,
    pub shift: DomainShift,
    pub sample_count: usize,
    pub seed: u64,
}

impl DatasetSpec {
    /// Pretraining task: all seven shapes at 30% prevalence, unshifted.
    pub fn source(sample_count: usize, seed_: u64) -> Self {
        Self {
            image_size: 32,
            class_count: MAX_CLASSES,
            prevalence: vec![0.3; MAX_CLASSES],
            cooccurrence: None,
            shift: DomainShift::identity(),
            sample_count,
            seed: seed_,
        }
    }

    /// Fine-tuning task: seven shapes with the tool prevalence profile, a
    /// boosted pair (classes 0 and 2) and a colour, brightness and noise
    /// shift.
    pub fn target(sample_count: usize, seed_: u64) -> Self {
        Self {
            image_size: 32,
            class_count: 7,
            prevalence: TOOL_PREVALENCE.to_vec(),
            cooccurrence: Some(Cooccurrence {
                classes: (0, 2),
                joint: 0.3,
            }),
            shift: DomainShift {
                hue_degrees: 30.0,
                brightness: 0.9,
                noise_sigma: 0.03,
                texture: 0,
            },
            sample_count,
            seed: seed_,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::config(format!("image_size must be >= 8, got {}", self.image_size)));
        }
        if self.class_count == 0 || self.class_count > MAX_CLASSES {
            return Err(Error::config(format!(
                "class_count must be in 1..={MAX_CLASSES}, got {}",
                self.class_count
            )));
        }
        if self.prevalence.len() != self.class_count {
            return Err(Error::config(format!(
                "{} prevalence entries for {} classes",
                self.prevalence.len(),
                self.class_count
            )));
        }
        for (c, &p) in self.prevalence.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config(format!("prevalence of class {c} must be in (0, 1), got {p}")));
            }
            if p * (self.sample_count as f64) < 1.0 {
                return Err(Error::config(format!(
                    "class {c} expects {:.3} positives in {} samples; at least 1 required",
                    p * self.sample_count as f64,
                    self.sample_count
                )));
            }
        }
        if let Some(co) = &self.cooccurrence {
            let (a, b) = co.classes;
            if a == b || a >= self.class_count || b >= self.class_count {
                return Err(Error::config(format!("invalid co-occurrence pair ({a}, {b})")));
            }
            let cap = self.prevalence[a].min(self.prevalence[b]);
            if !(co.joint >= 0.0 && co.joint <= cap) {
                return Err(Error::config(format!(
                    "co-occurrence probability {} must be in [0, {cap}]",
                    co.joint
                )));
            }
        }
        self.shift.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Index in the generated dataset; keys per-sample random streams.
    pub id: u32,
    /// HWC RGB.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    /// Union glyph coverage per pixel (0 = background), when known.
    pub coverage: Option<Vec<u8>>,
    pub texture: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub size: usize,
    pub class_count: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of positive labels per class.
    pub fn prevalence(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.class_count];
        for s in &self.samples {
            for (c, &l) in s.labels.iter().enumerate() {
                counts[c] += l as usize;
            }
        }
        counts.iter().map(|&k| k as f64 / self.len().max(1) as f64).collect()
    }

    /// Row-major `len × class_count` label matrix.
    pub fn label_matrix(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.labels.iter().copied()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            size: self.size,
            class_count: self.class_count,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Normalised `[B, 3, H, W]` images and `[B, classes]` targets. With
    /// `augment = Some((seed, epoch))` each image gets an augmentation drawn
    /// from a stream keyed by epoch and sample id.
    pub fn batch(&self, indices: &[usize], augment: Option<(u64, usize)>) -> (Tensor<f32>, Tensor<f32>) {
        let (s, b) = (self.size, indices.len());
        let plane = s * s;
        let mut x = vec![0f32; b * 3 * plane];
        let mut y = Vec::with_capacity(b * self.class_count);
        for (n, &i) in indices.iter().enumerate() {
            let sample = &self.samples[i];
            let augmented;
            let pixels = match augment {
                Some((seed_, epoch)) => {
                    let key = ((epoch as u64) << 32) | sample.id as u64;
                    let mut rng = seed::stream(seed_, "augment", key);
                    augmented = AugmentOp::sample(&mut rng).apply(&sample.pixels, s, 3);
                    &augmented
                }
                None => &sample.pixels,
            };
            let out = &mut x[n * 3 * plane..(n + 1) * 3 * plane];
            for (p, px) in pixels.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    out[c * plane + p] = (px[c] as f32 / 255.0 - PIXEL_MEAN) / PIXEL_STD;
                }
            }
            y.extend(sample.labels.iter().map(|&l| l as f32));
        }
        (
            Tensor::new(vec![b, 3, s, s], x).expect("batch shape"),
            Tensor::new(vec![b, self.class_count], y).expect("label shape"),
        )
    }
}

fn sample_labels(spec: &DatasetSpec, rng: &mut impl Rng) -> Vec<u8> {
    let mut labels = vec![0u8; spec.class_count];
    let mut p = spec.prevalence.clone();
    if let Some(co) = &spec.cooccurrence {
        let (a, b) = co.classes;
        if co.joint > 0.0 && rng.gen::<f64>() < co.joint {
            labels[a] = 1;
            labels[b] = 1;
            p[a] = 0.0;
            p[b] = 0.0;
        } else {
            for c in [a, b] {
                p[c] = (p[c] - co.joint) / (1.0 - co.joint);
            }
        }
    }
    for (c, &pc) in p.iter().enumerate() {
        if labels[c] == 0 && rng.gen::<f64>() < pc {
            labels[c] = 1;
        }
    }
    labels
}

/// Glyph placements of sample `index`, as generated by [`generate_dataset`].
pub fn sample_layout(spec: &DatasetSpec, index: usize, labels: &[u8]) -> Vec<render::Placement> {
    let mut rng = seed::stream(spec.seed, "layout", index as u64);
    render::layout(labels, spec.image_size, &mut rng)
}

/// Deterministic dataset for `spec`: labels per prevalence, one glyph per
/// positive label, rendered on the plain background and then shifted.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let samples: Vec<Sample> = (0..spec.sample_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(spec.seed, "labels", i as u64);
            let labels = sample_labels(spec, &mut rng);
            let placements = sample_layout(spec, i, &labels);
            let (pixels, coverage) = render::render(&placements, spec.image_size, 0);
            Sample {
                id: i as u32,
                pixels,
                labels,
                coverage: Some(coverage),
                texture: 0,
            }
        })
        .collect();
    let clean = Dataset {
        size: spec.image_size,
        class_count: spec.class_count,
        samples,
    };
    apply_domain_shift(&clean, &spec.shift, seed::sub_seed(spec.seed, "shift", 0))
}

/// Seeded shuffle split into train / validation / test by `fractions`.
pub fn split_dataset(data: &Dataset, fractions: (f64, f64, f64), seed_: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(*f >= 0.0) || !f.is_finite()) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions must be non-negative and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::stream(seed_, "split", 0));
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    Ok((
        data.subset(&order[..n_train]),
        data.subset(&order[n_train..n_train + n_val]),
        data.subset(&order[n_train + n_val..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let mut s = DatasetSpec::target(1000, 0);
        assert!(s.validate().is_ok());
        s.sample_count = 40; // 0.0176 · 40 < 1
        assert!(s.validate().is_err());
        let mut s = DatasetSpec::source(100, 0);
        s.prevalence[1] = 1.0;
        assert!(s.validate().is_err());
        let mut s = DatasetSpec::source(100, 0);
        s.class_count = 8;
        assert!(s.validate().is_err());
        let mut s = DatasetSpec::target(1000, 0);
        s.cooccurrence = Some(Cooccurrence {
            classes: (0, 1),
            joint: 0.3,
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DatasetSpec::target(60, 5);
        let a = generate_dataset(&spec).unwrap();
        assert_eq!(a, generate_dataset(&spec).unwrap());
        let other = generate_dataset(&DatasetSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a, other);
        assert!(a.samples.iter().all(|s| s.texture == 0));
    }

    #[test]
    fn batch_layout() {
        let data = generate_dataset(&DatasetSpec::source(4, 1)).unwrap();
        let (x, y) = data.batch(&[2, 0], None);
        assert_eq!(x.shape(), &[2, 3, 32, 32]);
        assert_eq!(y.shape(), &[2, 7]);
        let px = &data.samples[2].pixels;
        // channel 1 of pixel (row 3, col 5)
        let expect = (px[(3 * 32 + 5) * 3 + 1] as f32 / 255.0 - 0.5) / 0.25;
        assert_eq!(x.data()[1024 + 3 * 32 + 5], expect);
        assert_eq!(&y.data()[..7], &data.samples[2].labels.iter().map(|&l| l as f32).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn split_sizes() {
        let data = generate_dataset(&DatasetSpec::source(40, 1)).unwrap();
        let (a, b, c) = split_dataset(&data, (0.5, 0.25, 0.25), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (20, 10, 10));
        assert!(split_dataset(&data, (0.5, 0.5, 0.5), 3).is_err());
        assert!(split_dataset(&data, (1.2, -0.2, 0.0), 3).is_err());
    }
}
