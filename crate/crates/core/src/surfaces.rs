//! Closed-form accuracy surfaces with known super-level sets.
//!
//! Surfaces take normalized coordinates `u` in `[0, 1]^d` and return a value
//! in `[0, 1]`. Each has an exact labeler for `{u : f(u) >= h}` that does
//! not go through `f`, so the LSE loop can be scored without images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUMP_WIDTH: f64 = 0.08;

/// Lobe centers and per-dimension widths; the last two dimensions barely
/// matter, like brightness for a contrast-normalized model. Centers sit off
/// the 5-point grid lattice so no grid value lands close to 0.85.
const LOBE_A: [f64; 5] = [0.3, 0.7, 0.3, 0.5, 0.5];
const LOBE_B: [f64; 5] = [0.7, 0.3, 0.55, 0.5, 0.5];
const LOBE_WIDTHS: [f64; 5] = [0.4, 0.4, 0.4, 100.0, 100.0];

/// Plateau box on the first two dimensions; the others are unconstrained.
const PLATEAU_BOX: [(f64, f64); 2] = [(0.0, 0.375), (0.125, 0.875)];
const PLATEAU_HIGH: f64 = 1.0;
const PLATEAU_LOW: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkSurface {
    /// `exp(-|u - 0.5|^2 / 0.08)`
    RadialBump,
    /// 1 inside an axis-aligned box, 0.5 outside.
    Plateau,
    /// The larger of two anisotropic Gaussian lobes.
    TwoLobe,
}

pub const SURFACES: [BenchmarkSurface; 3] = [
    BenchmarkSurface::RadialBump,
    BenchmarkSurface::Plateau,
    BenchmarkSurface::TwoLobe,
];

fn lobe_param(table: &[f64; 5], j: usize, pad: f64) -> f64 {
    table.get(j).copied().unwrap_or(pad)
}

fn lobe_exponent(u: &[f64], center: &[f64; 5]) -> f64 {
    u.iter()
        .enumerate()
        .map(|(j, x)| {
            let d = x - lobe_param(center, j, 0.5);
            d * d / lobe_param(&LOBE_WIDTHS, j, 100.0)
        })
        .sum()
}

fn in_plateau_box(u: &[f64]) -> bool {
    u.iter()
        .zip(PLATEAU_BOX)
        .all(|(x, (lo, hi))| (lo..=hi).contains(x))
}

impl BenchmarkSurface {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkSurface::RadialBump => "radial_bump",
            BenchmarkSurface::Plateau => "plateau",
            BenchmarkSurface::TwoLobe => "two_lobe",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        SURFACES
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::input(format!("unknown benchmark surface `{name}`")))
    }

    pub fn evaluate(self, u: &[f64]) -> f64 {
        match self {
            BenchmarkSurface::RadialBump => {
                let r2: f64 = u.iter().map(|x| (x - 0.5) * (x - 0.5)).sum();
                (-r2 / BUMP_WIDTH).exp()
            }
            BenchmarkSurface::Plateau => {
                if in_plateau_box(u) {
                    PLATEAU_HIGH
                } else {
                    PLATEAU_LOW
                }
            }
            BenchmarkSurface::TwoLobe => {
                let e = lobe_exponent(u, &LOBE_A).min(lobe_exponent(u, &LOBE_B));
                (-e).exp()
            }
        }
    }

    /// Exact membership of `u` in `{f >= h}`, derived by inverting `f`.
    pub fn label(self, u: &[f64], h: f64) -> u8 {
        if h <= 0.0 {
            return 1;
        }
        let positive = match self {
            BenchmarkSurface::RadialBump => {
                let r2: f64 = u.iter().map(|x| (x - 0.5) * (x - 0.5)).sum();
                r2 <= -BUMP_WIDTH * h.ln()
            }
            BenchmarkSurface::Plateau => {
                if h <= PLATEAU_LOW {
                    true
                } else {
                    h <= PLATEAU_HIGH && in_plateau_box(u)
                }
            }
            BenchmarkSurface::TwoLobe => {
                let bound = -h.ln();
                lobe_exponent(u, &LOBE_A) <= bound || lobe_exponent(u, &LOBE_B) <= bound
            }
        };
        u8::from(positive)
    }
}

impl std::fmt::Display for BenchmarkSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Looks a surface up by name.
pub fn benchmark_surface(name: &str) -> Result<BenchmarkSurface> {
    BenchmarkSurface::from_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_bump_ball() {
        let h: f64 = 0.85;
        let radius = (-BUMP_WIDTH * h.ln()).sqrt();
        let s = BenchmarkSurface::RadialBump;
        let inside = [0.5 + radius * 0.999, 0.5, 0.5];
        let outside = [0.5 + radius * 1.001, 0.5, 0.5];
        assert_eq!(s.label(&inside, h), 1);
        assert_eq!(s.label(&outside, h), 0);
        assert!(s.evaluate(&inside) >= h);
        assert!(s.evaluate(&outside) < h);
        assert_eq!(s.evaluate(&[0.5; 5]), 1.0);
    }

    #[test]
    fn plateau_matches_box() {
        let s = BenchmarkSurface::Plateau;
        assert_eq!(s.evaluate(&[0.2, 0.5, 0.9, 0.0, 1.0]), 1.0);
        assert_eq!(s.evaluate(&[0.5, 0.5, 0.5, 0.5, 0.5]), 0.5);
        assert_eq!(s.label(&[0.2, 0.5, 0.9, 0.0, 1.0], 0.85), 1);
        assert_eq!(s.label(&[0.2, 0.95, 0.0, 0.0, 0.0], 0.85), 0);
        assert_eq!(s.label(&[0.9, 0.95, 0.0, 0.0, 0.0], 0.4), 1);
    }

    #[test]
    fn two_lobe_peaks() {
        let s = BenchmarkSurface::TwoLobe;
        assert_eq!(s.evaluate(&LOBE_A), 1.0);
        assert_eq!(s.evaluate(&LOBE_B), 1.0);
        assert!(s.evaluate(&[0.5; 5]) < 0.85);
        assert!(s.evaluate(&[0.0, 0.0, 1.0, 0.0, 0.0]) < 0.2);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(benchmark_surface("saddle"), Err(Error::Input(_))));
        assert_eq!(
            benchmark_surface("two_lobe").unwrap(),
            BenchmarkSurface::TwoLobe
        );
    }
}
