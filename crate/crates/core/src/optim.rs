//! Adam with one learning rate per layer.
//!
//! Frozen layers are skipped entirely: neither their parameters nor their
//! moment estimates move. Moments are kept, so a layer that is unfrozen later
//! resumes from where it stopped. Bias correction uses each layer's own
//! update count, while the global step counter advances on every call.

use crate::autodiff::Float;
use crate::error::{Error, Result};
use crate::nn::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Float = f32> {
    /// First moments, `[layer][param][element]`.
    m: Vec<Vec<Vec<T>>>,
    v: Vec<Vec<Vec<T>>>,
    t: u64,
    layer_steps: Vec<u64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Float> AdamState<T> {
    pub fn new(model: &Model<T>) -> Self {
        let zeros = || {
            model
                .layers()
                .iter()
                .map(|l| l.params().iter().map(|p| vec![T::zero(); p.len()]).collect())
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            layer_steps: vec![0; model.layer_count()],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn layer_steps(&self) -> &[u64] {
        &self.layer_steps
    }

    pub fn first_moment(&self, layer: usize, param: usize) -> &[T] {
        &self.m[layer][param]
    }

    pub fn second_moment(&self, layer: usize, param: usize) -> &[T] {
        &self.v[layer][param]
    }

    /// One bias-corrected update of every unfrozen layer at its effective
    /// learning rate. Returns the number of parameter elements updated.
    pub fn step(&mut self, model: &mut Model<T>) -> Result<usize> {
        if self.m.len() != model.layer_count() {
            return Err(Error::shape("adam_step", "optimizer state built for a different model"));
        }
        // validate first so a failed step leaves everything untouched
        for (li, layer) in model.layers().iter().enumerate() {
            if layer.is_frozen() {
                continue;
            }
            for (pi, p) in layer.params().iter().enumerate() {
                if p.grad().is_none() {
                    return Err(Error::MissingGrad { layer: li, param: pi });
                }
                if p.len() != self.m[li][pi].len() {
                    return Err(Error::shape("adam_step", format!("layer {li} param {pi} size changed")));
                }
            }
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut updated = 0;
        for li in 0..model.layer_count() {
            let layer = model.layer_mut(li)?;
            if layer.is_frozen() {
                continue;
            }
            self.layer_steps[li] += 1;
            let k = self.layer_steps[li] as i32;
            let c1 = 1.0 - b1.powi(k);
            let c2 = 1.0 - b2.powi(k);
            let lr = layer.effective_lr();
            updated += layer.numel();
            for (pi, p) in layer.params_mut().iter_mut().enumerate() {
                let grad = p.grad().expect("checked above").to_vec();
                let (m, v) = (&mut self.m[li][pi], &mut self.v[li][pi]);
                for (i, w) in p.data_mut().iter_mut().enumerate() {
                    let g = grad[i].as_f64();
                    let mi = b1 * m[i].as_f64() + (1.0 - b1) * g;
                    let vi = b2 * v[i].as_f64() + (1.0 - b2) * g * g;
                    m[i] = T::from_f64(mi);
                    v[i] = T::from_f64(vi);
                    let direction = (mi / c1) / ((vi / c2).sqrt() + eps);
                    *w = T::from_f64(w.as_f64() - lr * direction);
                }
            }
        }
        Ok(updated)
    }
}

/// Sets the rate the optimizer uses for `layer`.
pub fn set_layer_lr<T: Float>(model: &mut Model<T>, layer: usize, lr: f64) -> Result<()> {
    model.set_effective_lr(layer, lr)
}
