//! Ground-truth grids, F1 scoring and the random-sampling baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lse::{DistortionLevel, SearchSpace};

const BASELINE_STREAM: u64 = 2;

/// Every point of an equispaced Cartesian grid, endpoints included, ordered
/// lexicographically with the first dimension most significant.
pub fn grid_points(space: &SearchSpace, points_per_dim: usize) -> Result<Vec<DistortionLevel>> {
    if points_per_dim < 2 {
        return Err(Error::input("points_per_dim must be at least 2"));
    }
    let axes: Vec<Vec<f64>> = space
        .dims()
        .iter()
        .map(|d| {
            (0..points_per_dim)
                .map(|i| {
                    if i + 1 == points_per_dim {
                        d.upper
                    } else {
                        d.lower + (d.upper - d.lower) * i as f64 / (points_per_dim - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let total = points_per_dim
        .checked_pow(space.dim() as u32)
        .ok_or_else(|| Error::input("grid too large"))?;
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; space.dim()];
    for _ in 0..total {
        points.push(DistortionLevel::new(
            idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect(),
        ));
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < points_per_dim {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub points: Vec<DistortionLevel>,
    /// Oracle value at each point.
    pub accuracies: Vec<f64>,
    pub truth: Vec<u8>,
    pub threshold: f64,
}

impl EvaluationGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.truth.iter().filter(|&&t| t == 1).count()
    }
}

/// Evaluates the oracle once per grid point and labels `accuracy >= h`.
pub fn build_grid<F>(
    space: &SearchSpace,
    points_per_dim: usize,
    mut oracle: F,
    h: f64,
) -> Result<EvaluationGrid>
where
    F: FnMut(&DistortionLevel) -> Result<f64>,
{
    let points = grid_points(space, points_per_dim)?;
    let accuracies = points.iter().map(&mut oracle).collect::<Result<Vec<_>>>()?;
    let truth = accuracies.iter().map(|&a| u8::from(a >= h)).collect();
    Ok(EvaluationGrid {
        points,
        accuracies,
        truth,
        threshold: h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Precision, recall and their harmonic mean, with 0/0 read as 0.
pub fn f1_score(truth: &[u8], predicted: &[u8]) -> Result<F1Score> {
    if truth.len() != predicted.len() {
        return Err(Error::input(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        if t > 1 || p > 1 {
            return Err(Error::input("labels must be 0 or 1"));
        }
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    })
}

/// Spends the budget on uniform random levels and labels any point like its
/// nearest sample (normalized Euclidean distance, lowest index on ties).
#[derive(Debug, Clone)]
pub struct RandomBaseline {
    samples: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl RandomBaseline {
    pub fn fit<F>(
        space: &SearchSpace,
        budget: usize,
        seed: u64,
        h: f64,
        mut oracle: F,
    ) -> Result<Self>
    where
        F: FnMut(&DistortionLevel) -> Result<f64>,
    {
        if budget == 0 {
            return Err(Error::input("baseline budget must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(BASELINE_STREAM);
        let samples = space.uniform_normalized(budget, &mut rng);
        let labels = samples
            .iter()
            .map(|u| Ok(u8::from(oracle(&space.denormalize(u))? >= h)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomBaseline { samples, labels })
    }

    pub fn classify_normalized(&self, u: &[f64]) -> u8 {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.samples.iter().enumerate() {
            let d: f64 = s.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        self.labels[best]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::DistortionKind;

    #[test]
    fn full_grid_has_3125_points() {
        let pts = grid_points(&SearchSpace::full(), 5).unwrap();
        assert_eq!(pts.len(), 3125);
        assert_eq!(pts[0].values, vec![0.0, 0.7, -0.2, -0.2, 0.7]);
        assert_eq!(pts[1].values, vec![0.0, 0.7, -0.2, -0.2, 0.85]);
        assert_eq!(pts[3124].values, vec![90.0, 1.3, 0.2, 0.2, 1.3]);
    }

    #[test]
    fn two_point_rotation_axis() {
        let pts = grid_points(&SearchSpace::of(&[DistortionKind::Rotation]), 2).unwrap();
        assert_eq!(
            pts,
            vec![
                DistortionLevel::new(vec![0.0]),
                DistortionLevel::new(vec![90.0])
            ]
        );
        assert!(grid_points(&SearchSpace::full(), 1).is_err());
    }

    #[test]
    fn f1_cases() {
        let s = f1_score(&[1, 0, 1, 1], &[1, 0, 1, 1]).unwrap();
        assert_eq!(s.f1, 1.0);
        let s = f1_score(&[1, 0, 1], &[0, 0, 0]).unwrap();
        assert_eq!(s.f1, 0.0);
        // tp=2 fp=1 fn=1
        let s = f1_score(&[1, 1, 0, 1, 0], &[1, 1, 1, 0, 0]).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(&[0, 0], &[0, 0]).unwrap().f1, 0.0);
        assert!(f1_score(&[0, 1], &[0]).is_err());
        assert!(f1_score(&[2], &[0]).is_err());
    }

    #[test]
    fn grid_aborts_on_oracle_failure() {
        let space = SearchSpace::of(&[DistortionKind::Rotation]);
        let mut n = 0;
        let r = build_grid(
            &space,
            3,
            |_| {
                n += 1;
                if n == 2 {
                    Err(Error::input("boom"))
                } else {
                    Ok(1.0)
                }
            },
            0.5,
        );
        assert!(r.is_err());
    }
}
