//! Procedural stand-ins for handwritten digits and 2-D sprites.
//!
//! `synth-digits`: 28×28 grayscale strokes, ten classes, random slant,
//! rotation, scale, thickness, jitter and glyph variant.
//! `synth-sprites`: 64×64 binary shapes (square, ellipse, heart) with
//! continuous scale / rotation / x / y factors.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batch::Metadata;
use super::dataset::Dataset;
use crate::error::Result;
use crate::tensor::Tensor;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, steps: usize) -> Stroke {
    (0..=steps)
        .map(|i| {
            let t = (from + (to - from) * i as f64 / steps as f64) * PI / 180.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Strokes of each digit in a unit box, `y` pointing down.
fn glyph(digit: usize, variant: bool) -> Vec<Stroke> {
    match (digit, variant) {
        (0, false) => vec![arc(0.5, 0.5, 0.33, 0.47, 0.0, 360.0, 20)],
        (0, true) => vec![arc(0.5, 0.5, 0.38, 0.45, -80.0, 290.0, 20)],
        (1, false) => vec![vec![(0.5, 0.02), (0.5, 0.98)]],
        (1, true) => vec![
            vec![(0.28, 0.22), (0.52, 0.02), (0.52, 0.98)],
            vec![(0.3, 0.98), (0.74, 0.98)],
        ],
        (2, false) => {
            let mut s = arc(0.5, 0.3, 0.32, 0.28, 190.0, 380.0, 10);
            s.extend([(0.15, 0.98), (0.88, 0.98)]);
            vec![s]
        }
        (2, true) => vec![vec![(0.18, 0.2), (0.45, 0.02), (0.78, 0.1), (0.8, 0.35), (0.2, 0.95), (0.5, 0.85), (0.9, 0.95)]],
        (3, false) => vec![arc(0.48, 0.27, 0.32, 0.25, 200.0, 450.0, 12), arc(0.48, 0.73, 0.35, 0.26, -90.0, 160.0, 12)],
        (3, true) => vec![vec![(0.15, 0.02), (0.85, 0.02), (0.45, 0.42)], arc(0.48, 0.7, 0.36, 0.28, -90.0, 160.0, 12)],
        (4, false) => vec![vec![(0.66, 0.98), (0.66, 0.02), (0.1, 0.68), (0.92, 0.68)]],
        (4, true) => vec![vec![(0.22, 0.02), (0.14, 0.58), (0.88, 0.58)], vec![(0.68, 0.28), (0.68, 0.98)]],
        (5, false) => {
            let mut s = vec![(0.82, 0.02), (0.25, 0.02), (0.2, 0.45)];
            s.extend(arc(0.48, 0.68, 0.34, 0.3, -120.0, 150.0, 12));
            vec![s]
        }
        (5, true) => {
            let mut s = vec![(0.25, 0.02), (0.2, 0.45)];
            s.extend(arc(0.48, 0.68, 0.34, 0.3, -120.0, 150.0, 12));
            vec![s, vec![(0.25, 0.02), (0.85, 0.02)]]
        }
        (6, false) => {
            let mut s = vec![(0.75, 0.02), (0.45, 0.18)];
            s.extend(arc(0.48, 0.7, 0.3, 0.27, 190.0, 550.0, 18));
            vec![s]
        }
        (6, true) => vec![vec![(0.6, 0.02), (0.2, 0.65)], arc(0.48, 0.72, 0.3, 0.25, 0.0, 360.0, 16)],
        (7, false) => vec![vec![(0.1, 0.02), (0.9, 0.02), (0.4, 0.98)]],
        (7, true) => vec![vec![(0.1, 0.12), (0.12, 0.02), (0.9, 0.02), (0.45, 0.98)], vec![(0.35, 0.5), (0.8, 0.5)]],
        (8, false) => vec![arc(0.5, 0.26, 0.25, 0.24, 0.0, 360.0, 16), arc(0.5, 0.73, 0.31, 0.25, 0.0, 360.0, 16)],
        (8, true) => vec![arc(0.5, 0.28, 0.28, 0.26, 0.0, 360.0, 16), arc(0.5, 0.74, 0.28, 0.24, 0.0, 360.0, 16)],
        (9, false) => {
            let mut s = arc(0.48, 0.3, 0.3, 0.27, 0.0, 360.0, 16);
            s.extend([(0.78, 0.3), (0.74, 0.98)]);
            vec![s]
        }
        (9, true) => {
            let mut s = arc(0.48, 0.3, 0.3, 0.27, 0.0, 360.0, 16);
            s.extend([(0.78, 0.3), (0.7, 0.8), (0.42, 0.98)]);
            vec![s]
        }
        _ => unreachable!("digits are 0..10"),
    }
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// One 28×28 digit, row-major.
pub fn render_digit(digit: usize, rng: &mut impl Rng) -> Vec<f64> {
    const S: usize = 28;
    let strokes = glyph(digit, rng.random_bool(0.5));
    let scale = rng.random_range(17.0..21.0);
    let aspect = rng.random_range(0.8..1.15);
    let slant = rng.random_range(-0.35..0.35);
    let rot = rng.random_range(-0.2..0.2f64);
    let (tx, ty) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let half_width = rng.random_range(0.8..1.7);
    let ink = rng.random_range(0.85..1.0);
    let (c, s) = (rot.cos(), rot.sin());
    let place = |(u, v): (f64, f64)| {
        let (u, v) = ((u - 0.5) * aspect, v - 0.5);
        let u = u - slant * v;
        let (u, v) = (c * u - s * v, s * u + c * v);
        (14.0 + tx + scale * u, 14.0 + ty + scale * v)
    };
    let segments: Vec<((f64, f64), (f64, f64))> = strokes
        .into_iter()
        .flat_map(|stroke| {
            let pts: Vec<(f64, f64)> = stroke
                .into_iter()
                .map(|(u, v)| (u + rng.random_range(-0.03..0.03), v + rng.random_range(-0.03..0.03)))
                .map(place)
                .collect();
            pts.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();
    let mut img = vec![0.0; S * S];
    for r in 0..S {
        for col in 0..S {
            let p = (col as f64 + 0.5, r as f64 + 0.5);
            let d = segments
                .iter()
                .map(|&(a, b)| seg_dist(p, a, b))
                .fold(f64::INFINITY, f64::min);
            img[r * S + col] = ink * (half_width + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    img
}

/// `n` digits with uniformly drawn labels.
pub fn synth_digits(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let digit = rng.random_range(0..10);
        data.extend(render_digit(digit, &mut rng));
        labels.push(digit);
    }
    Dataset::new(
        "synth-digits",
        [1, 28, 28],
        Tensor::from_vec(n, 784, data)?,
        Metadata::with_labels(labels),
        vec![10],
    )
}

pub const SPRITE_SHAPES: [&str; 3] = ["square", "ellipse", "heart"];

/// Continuous factors of one sprite, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpriteFactors {
    pub scale: f64,
    pub rotation: f64,
    pub x: f64,
    pub y: f64,
}

fn inside(shape: usize, u: f64, v: f64) -> bool {
    match shape {
        0 => u.abs() <= 0.8 && v.abs() <= 0.8,
        1 => u * u + (v / 0.55) * (v / 0.55) <= 1.0,
        _ => {
            let (u, v) = (u * 1.1, -v * 1.1 + 0.15);
            let a = u * u + v * v - 1.0;
            a * a * a - u * u * v * v * v <= 0.0
        }
    }
}

/// One 64×64 sprite, row-major, 2×2 supersampled.
pub fn render_sprite(shape: usize, f: SpriteFactors) -> Vec<f64> {
    const S: usize = 64;
    let radius = 5.0 + 7.0 * f.scale;
    let theta = 2.0 * PI * f.rotation;
    let (c, s) = (theta.cos(), theta.sin());
    let (cx, cy) = (14.0 + 36.0 * f.x, 14.0 + 36.0 * f.y);
    let mut img = vec![0.0; S * S];
    for r in 0..S {
        for col in 0..S {
            let mut hits = 0;
            for (oy, ox) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let (dx, dy) = (col as f64 + ox - cx, r as f64 + oy - cy);
                let (u, v) = ((c * dx + s * dy) / radius, (-s * dx + c * dy) / radius);
                hits += inside(shape, u, v) as u32;
            }
            img[r * S + col] = hits as f64 / 4.0;
        }
    }
    img
}

/// `n` sprites with uniformly drawn shape and factors. Label field 0 is
/// the shape; continuous metadata columns are scale, rotation, x, y.
pub fn synth_sprites(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * 4096);
    let mut labels = Vec::with_capacity(n);
    let mut factors = Vec::with_capacity(n * 4);
    for _ in 0..n {
        let shape = rng.random_range(0..3);
        let f = SpriteFactors {
            scale: rng.random(),
            rotation: rng.random(),
            x: rng.random(),
            y: rng.random(),
        };
        data.extend(render_sprite(shape, f));
        labels.push(shape);
        factors.extend([f.scale, f.rotation, f.x, f.y]);
    }
    Dataset::new(
        "synth-sprites",
        [1, 64, 64],
        Tensor::from_vec(n, 4096, data)?,
        Metadata {
            labels: vec![labels],
            continuous: Some(Tensor::from_vec(n, 4, factors)?),
        },
        vec![3],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_are_inked_and_bounded() {
        let d = synth_digits(50, 1).unwrap();
        for r in 0..d.len() {
            let ink: f64 = d.x.row(r).iter().sum();
            assert!(ink > 30.0 && ink < 400.0, "ink {ink}");
        }
        assert!(d.x.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(synth_digits(50, 1).unwrap(), d);
    }

    #[test]
    fn sprites_cover_their_shape() {
        let f = SpriteFactors {
            scale: 0.5,
            rotation: 0.0,
            x: 0.5,
            y: 0.5,
        };
        let areas: Vec<f64> = (0..3).map(|s| render_sprite(s, f).iter().sum()).collect();
        assert!(areas.iter().all(|&a| a > 40.0), "{areas:?}");
        assert!(areas[0] > areas[1]);
    }
}
