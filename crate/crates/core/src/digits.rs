//! A small procedurally drawn 28x28 digit corpus.
//!
//! Each digit is a set of stroke polylines in a unit box. Every sample draws
//! its own slant, rotation, scale, offset, stroke width and control-point
//! wobble, then renders the strokes with an anti-aliased distance falloff.
//! Layout follows MNIST: glyphs occupy roughly the central 20x20 pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::AssuranceSet;
use crate::distortion::Image;
use crate::error::Result;

pub const SIDE: usize = 28;
pub const CLASSES: usize = 10;

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, n: usize) -> Stroke {
    (0..=n)
        .map(|i| {
            let t = (from + (to - from) * i as f64 / n as f64).to_radians();
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn template(digit: usize) -> Vec<Stroke> {
    match digit {
        0 => vec![ellipse(0.5, 0.5, 0.3, 0.45, 0.0, 360.0, 20)],
        1 => vec![vec![(0.32, 0.22), (0.55, 0.03), (0.55, 0.97)]],
        2 => vec![vec![
            (0.18, 0.25),
            (0.3, 0.08),
            (0.55, 0.03),
            (0.78, 0.15),
            (0.8, 0.35),
            (0.6, 0.55),
            (0.2, 0.95),
            (0.85, 0.95),
        ]],
        3 => vec![vec![
            (0.2, 0.1),
            (0.5, 0.03),
            (0.78, 0.15),
            (0.75, 0.35),
            (0.45, 0.48),
            (0.78, 0.6),
            (0.8, 0.82),
            (0.5, 0.97),
            (0.18, 0.88),
        ]],
        4 => vec![vec![(0.65, 0.97), (0.65, 0.03), (0.12, 0.68), (0.88, 0.68)]],
        5 => vec![vec![
            (0.8, 0.04),
            (0.27, 0.04),
            (0.22, 0.45),
            (0.55, 0.38),
            (0.8, 0.55),
            (0.78, 0.82),
            (0.5, 0.97),
            (0.18, 0.88),
        ]],
        6 => vec![vec![
            (0.7, 0.04),
            (0.38, 0.32),
            (0.22, 0.65),
            (0.3, 0.9),
            (0.52, 0.97),
            (0.76, 0.84),
            (0.74, 0.58),
            (0.48, 0.5),
            (0.24, 0.64),
        ]],
        7 => vec![vec![(0.15, 0.04), (0.85, 0.04), (0.4, 0.97)]],
        8 => vec![
            ellipse(0.5, 0.26, 0.24, 0.22, 0.0, 360.0, 16),
            ellipse(0.5, 0.72, 0.29, 0.25, 0.0, 360.0, 16),
        ],
        9 => vec![
            ellipse(0.48, 0.3, 0.27, 0.25, 0.0, 360.0, 16),
            vec![(0.75, 0.3), (0.68, 0.97)],
        ],
        _ => unreachable!("digit {digit}"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one random sample of `digit`.
pub fn render_digit(digit: usize, rng: &mut impl Rng) -> Image {
    let size = rng.random_range(17.0..21.0);
    let aspect = rng.random_range(0.8..1.05);
    let slant = rng.random_range(-0.2..0.2);
    let angle = rng.random_range(-8.0f64..8.0).to_radians();
    let (sin, cos) = angle.sin_cos();
    let cx = 13.5 + rng.random_range(-1.2..1.2);
    let cy = 13.5 + rng.random_range(-1.2..1.2);
    let radius = rng.random_range(0.7..1.2);
    let wobble = 0.035;

    let strokes: Vec<Vec<(f64, f64)>> = template(digit)
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|(x, y)| {
                    let x = x + rng.random_range(-wobble..wobble);
                    let y = y + rng.random_range(-wobble..wobble);
                    // unit box -> centered glyph coordinates
                    let u = (x - 0.5) * size * aspect + slant * (0.5 - y) * size;
                    let v = (y - 0.5) * size;
                    (cx + cos * u - sin * v, cy + sin * u + cos * v)
                })
                .collect()
        })
        .collect();

    let mut px = vec![0.0; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let p = (c as f64, r as f64);
            let mut d = f64::INFINITY;
            for s in &strokes {
                for w in s.windows(2) {
                    d = d.min(segment_distance(p, w[0], w[1]));
                }
            }
            px[r * SIDE + c] = (radius + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    // quantize like an 8-bit source so IDX round trips are exact
    for v in &mut px {
        *v = (*v * 255.0).round() / 255.0;
    }
    Image::new(SIDE, SIDE, px).expect("rendered pixels are in range")
}

/// `n` samples with labels cycling through 0..9.
pub fn generate(n: usize, seed: u64) -> Result<AssuranceSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % CLASSES).collect();
    let images = labels.iter().map(|&d| render_digit(d, &mut rng)).collect();
    AssuranceSet::new(images, labels)
}

/// Disjoint training and assurance corpora of the given sizes.
pub fn desk_corpus(
    train: usize,
    assurance: usize,
    seed: u64,
) -> Result<(AssuranceSet, AssuranceSet)> {
    let all = generate(train + assurance, seed)?;
    Ok(all.split_at(train))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = generate(20, 3).unwrap();
        let b = generate(20, 3).unwrap();
        assert_eq!(a, b);
        for img in a.images() {
            let ink = img.total_intensity();
            assert!(ink > 20.0 && ink < 300.0, "ink {ink}");
            // nothing touches the outer border
            for i in 0..SIDE {
                assert_eq!(img.get(0, i), 0.0);
                assert_eq!(img.get(i, 0), 0.0);
            }
        }
    }

    #[test]
    fn labels_cycle() {
        let s = generate(23, 0).unwrap();
        assert_eq!(&s.labels()[..12], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]);
    }
}
