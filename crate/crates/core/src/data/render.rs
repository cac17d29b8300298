//! Glyph layout and anti-aliased rendering.

use rand::Rng;

/// One glyph shape per class, in class order.
pub const SHAPE_NAMES: [&str; 7] = ["circle", "square", "triangle", "cross", "bar", "ring", "wedge"];
pub const MAX_CLASSES: usize = SHAPE_NAMES.len();
pub const TEXTURE_COUNT: u8 = 4;

const SUPERSAMPLE: usize = 4;

/// A glyph drawn at a position, in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub class: usize,
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub color: [f64; 3],
}

/// Shape membership in unit coordinates centred on the glyph.
fn inside(shape: usize, u: f64, v: f64) -> bool {
    let r2 = u * u + v * v;
    match shape {
        0 => r2 <= 1.0,
        1 => u.abs() <= 0.8 && v.abs() <= 0.8,
        2 => (-0.8..=0.8).contains(&v) && u.abs() <= (v + 0.8) / 1.6 * 0.9,
        3 => (u.abs() <= 0.25 && v.abs() <= 0.9) || (v.abs() <= 0.25 && u.abs() <= 0.9),
        4 => u.abs() <= 0.95 && v.abs() <= 0.2,
        5 => (0.3025..=1.0).contains(&r2),
        6 => u >= 0.0 && v >= 0.0 && r2 <= 1.0,
        _ => false,
    }
}

/// Fraction of pixel `(x, y)` covered by the glyph.
pub fn glyph_alpha(p: &Placement, x: usize, y: usize) -> f64 {
    let mut hits = 0;
    for sy in 0..SUPERSAMPLE {
        for sx in 0..SUPERSAMPLE {
            let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
            let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
            if inside(p.class, (px - p.cx) / p.radius, (py - p.cy) / p.radius) {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
}

/// Background colour of texture `id` at pixel `(x, y)`, channel values in `[0, 255]`.
pub fn background(id: u8, x: usize, y: usize, size: usize) -> [f64; 3] {
    match id {
        0 => {
            let t = y as f64 / size as f64;
            [96.0 + 40.0 * t, 100.0 + 36.0 * t, 108.0 + 30.0 * t]
        }
        1 => {
            let s = (((x + y) / 4) % 2) as f64;
            [140.0 + 30.0 * s, 62.0 + 16.0 * s, 56.0 + 12.0 * s]
        }
        2 => {
            let c = ((x / 4 + y / 4) % 2) as f64;
            [80.0 + 30.0 * c, 110.0 + 30.0 * c, 80.0 + 30.0 * c]
        }
        _ => {
            let half = size as f64 / 2.0;
            let d = ((x as f64 - half).powi(2) + (y as f64 - half).powi(2)).sqrt();
            let s = ((d * 0.9).sin() + 1.0) / 2.0;
            [70.0 + 50.0 * s, 70.0 + 50.0 * s, 120.0 + 40.0 * s]
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = (h / 60.0) % 6.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
}

/// Places one glyph per positive label, in class order, avoiding heavy
/// overlap where possible.
pub fn layout(labels: &[u8], size: usize, rng: &mut impl Rng) -> Vec<Placement> {
    let mut placed: Vec<Placement> = Vec::new();
    for (class, _) in labels.iter().enumerate().filter(|(_, &l)| l == 1) {
        let radius = size as f64 * rng.gen_range(0.13..0.2);
        let (lo, hi) = (radius, size as f64 - radius);
        let mut centre = (0.0, 0.0);
        for _ in 0..16 {
            centre = (rng.gen_range(lo..hi), rng.gen_range(lo..hi));
            let clear = placed.iter().all(|q| {
                let d = ((q.cx - centre.0).powi(2) + (q.cy - centre.1).powi(2)).sqrt();
                d >= 0.8 * (q.radius + radius)
            });
            if clear {
                break;
            }
        }
        let color = hsv_to_rgb(rng.gen_range(0.0..360.0), rng.gen_range(0.2..0.5), rng.gen_range(0.8..1.0));
        placed.push(Placement {
            class,
            cx: centre.0,
            cy: centre.1,
            radius,
            color,
        });
    }
    placed
}

/// Renders glyphs over a texture. Returns HWC RGB pixels and the per-pixel
/// union coverage of all glyphs (0 = pure background).
pub fn render(placements: &[Placement], size: usize, texture: u8) -> (Vec<u8>, Vec<u8>) {
    let mut img = vec![0.0f64; size * size * 3];
    let mut bg_weight = vec![1.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let bg = background(texture, x, y, size);
            img[(y * size + x) * 3..][..3].copy_from_slice(&bg);
        }
    }
    for p in placements {
        let x0 = (p.cx - p.radius).floor().max(0.0) as usize;
        let y0 = (p.cy - p.radius).floor().max(0.0) as usize;
        let x1 = ((p.cx + p.radius).ceil() as usize).min(size);
        let y1 = ((p.cy + p.radius).ceil() as usize).min(size);
        for y in y0..y1 {
            for x in x0..x1 {
                let a = glyph_alpha(p, x, y);
                if a == 0.0 {
                    continue;
                }
                let px = &mut img[(y * size + x) * 3..][..3];
                for (c, v) in px.iter_mut().enumerate() {
                    *v = a * p.color[c] + (1.0 - a) * *v;
                }
                bg_weight[y * size + x] *= 1.0 - a;
            }
        }
    }
    let pixels = img.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let coverage = bg_weight.iter().map(|w| ((1.0 - w) * 255.0).round() as u8).collect();
    (pixels, coverage)
}
