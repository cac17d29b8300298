//! Pixelwise domain shift: background swap, hue rotation, brightness, noise.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::render::{background, TEXTURE_COUNT};
use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    pub hue_degrees: f64,
    pub brightness: f64,
    /// Standard deviation of additive noise, in units of full intensity.
    pub noise_sigma: f64,
    pub texture: u8,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self::identity()
    }
}

impl DomainShift {
    /// No change on source-texture images.
    pub fn identity() -> Self {
        Self {
            hue_degrees: 0.0,
            brightness: 1.0,
            noise_sigma: 0.0,
            texture: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.hue_degrees.is_finite() {
            return Err(Error::config("hue rotation must be finite"));
        }
        if !(self.brightness >= 0.0) || !self.brightness.is_finite() {
            return Err(Error::config(format!("brightness must be >= 0, got {}", self.brightness)));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::config(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.texture >= TEXTURE_COUNT {
            return Err(Error::config(format!(
                "texture id {} out of range (0..{TEXTURE_COUNT})",
                self.texture
            )));
        }
        Ok(())
    }
}

/// Rotation about the grey axis of RGB space.
fn hue_matrix(degrees: f64) -> [[f64; 3]; 3] {
    let (s, c) = degrees.to_radians().sin_cos();
    let k = (1.0 - c) / 3.0;
    let q = s / 3f64.sqrt();
    [[c + k, k - q, k + q], [k + q, c + k, k - q], [k - q, k + q, c + k]]
}

fn shift_sample(sample: &Sample, size: usize, shift: &DomainShift, seed_: u64) -> Result<Sample> {
    let swap = shift.texture != sample.texture;
    let coverage = match (&sample.coverage, swap) {
        (Some(c), _) => Some(c),
        (None, false) => None,
        (None, true) => {
            return Err(Error::config(format!(
                "sample {} has no coverage mask; cannot swap its background",
                sample.id
            )))
        }
    };
    let hue = (shift.hue_degrees % 360.0 != 0.0).then(|| hue_matrix(shift.hue_degrees));
    let noise = (shift.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, shift.noise_sigma * 255.0).expect("sigma validated"));
    let mut rng = seed::stream(seed_, "noise", sample.id as u64);

    let mut out = sample.pixels.clone();
    for y in 0..size {
        for x in 0..size {
            let at = (y * size + x) * 3;
            let mut px = [out[at] as f64, out[at + 1] as f64, out[at + 2] as f64];
            if swap {
                let a = coverage.expect("checked")[y * size + x] as f64 / 255.0;
                let old = background(sample.texture, x, y, size);
                let new = background(shift.texture, x, y, size);
                for c in 0..3 {
                    px[c] += (1.0 - a) * (new[c] - old[c]);
                }
            }
            if let Some(m) = hue {
                px = [0, 1, 2].map(|r| m[r][0] * px[0] + m[r][1] * px[1] + m[r][2] * px[2]);
            }
            if shift.brightness != 1.0 {
                px.iter_mut().for_each(|v| *v *= shift.brightness);
            }
            if let Some(n) = &noise {
                px.iter_mut().for_each(|v| *v += n.sample(&mut rng));
            }
            for c in 0..3 {
                out[at + c] = px[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(Sample {
        id: sample.id,
        pixels: out,
        labels: sample.labels.clone(),
        coverage: sample.coverage.clone(),
        texture: shift.texture,
    })
}

/// Applies `shift` to every image. Labels and coverage masks are carried
/// over unchanged; noise is keyed by `seed` and the sample id.
pub fn apply_domain_shift(data: &Dataset, shift: &DomainShift, seed_: u64) -> Result<Dataset> {
    shift.validate()?;
    let samples = data
        .samples
        .iter()
        .map(|s| shift_sample(s, data.size, shift, seed_))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        size: data.size,
        class_count: data.class_count,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hue_matrix_is_a_rotation() {
        let m = hue_matrix(360.0);
        for (r, row) in m.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert!((v - (r == c) as u8 as f64).abs() < 1e-12);
            }
        }
        // grey stays grey
        let m = hue_matrix(90.0);
        for row in m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(DomainShift::identity().validate().is_ok());
        let bad = DomainShift {
            brightness: -1.0,
            ..DomainShift::identity()
        };
        assert!(bad.validate().is_err());
        let bad = DomainShift {
            texture: 9,
            ..DomainShift::identity()
        };
        assert!(bad.validate().is_err());
    }
}
