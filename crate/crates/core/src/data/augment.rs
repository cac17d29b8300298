//! Label-preserving flips and right-angle rotations of square HWC images.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    Identity,
    FlipHorizontal,
    FlipVertical,
    /// Clockwise.
    Rotate90,
    Rotate180,
    Rotate270,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 6] = [
        AugmentOp::Identity,
        AugmentOp::FlipHorizontal,
        AugmentOp::FlipVertical,
        AugmentOp::Rotate90,
        AugmentOp::Rotate180,
        AugmentOp::Rotate270,
    ];

    pub fn sample(rng: &mut impl Rng) -> Self {
        Self::ALL[rng.gen_range(0..Self::ALL.len())]
    }

    /// Source coordinate read for output pixel `(x, y)`.
    fn source(self, x: usize, y: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        match self {
            AugmentOp::Identity => (x, y),
            AugmentOp::FlipHorizontal => (m - x, y),
            AugmentOp::FlipVertical => (x, m - y),
            AugmentOp::Rotate90 => (y, m - x),
            AugmentOp::Rotate180 => (m - x, m - y),
            AugmentOp::Rotate270 => (m - y, x),
        }
    }

    pub fn apply(self, pixels: &[u8], size: usize, channels: usize) -> Vec<u8> {
        assert_eq!(pixels.len(), size * size * channels, "image is not {size}×{size}×{channels}");
        if self == AugmentOp::Identity {
            return pixels.to_vec();
        }
        let mut out = vec![0u8; pixels.len()];
        for y in 0..size {
            for x in 0..size {
                let (sx, sy) = self.source(x, y, size);
                let (dst, src) = ((y * size + x) * channels, (sy * size + sx) * channels);
                out[dst..dst + channels].copy_from_slice(&pixels[src..src + channels]);
            }
        }
        out
    }
}

/// Applies one uniformly drawn [`AugmentOp`].
pub fn augment(pixels: &[u8], size: usize, channels: usize, rng: &mut impl Rng) -> Vec<u8> {
    AugmentOp::sample(rng).apply(pixels, size, channels)
}
