//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use maid_core::KernelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Squared-exponential kernel written out from scratch.
pub fn se(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&p.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    p.signal_variance * (-0.5 * r2).exp()
}

/// Posterior mean and variance by direct dense solves, with the constant
/// prior mean set to the sample mean and `shift` added to the diagonal.
pub fn dense_predict(
    x: &[Vec<f64>],
    y: &[f64],
    p: &KernelParams,
    shift: f64,
    probe: &[f64],
) -> (f64, f64) {
    let n = x.len();
    let m = y.iter().sum::<f64>() / n as f64;
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| se(&x[i], &x[j], p) + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect();
    let ks: Vec<f64> = x.iter().map(|xi| se(xi, probe, p)).collect();
    let w = dense_solve(k.clone(), y.iter().map(|v| v - m).collect());
    let v = dense_solve(k, ks.clone());
    let mu = m + ks.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let var = p.signal_variance - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    (mu, var.max(0.0))
}

/// Dense log marginal likelihood via a determinant from elimination.
pub fn dense_lml(x: &[Vec<f64>], y: &[f64], p: &KernelParams, shift: f64) -> f64 {
    let n = x.len();
    let m = y.iter().sum::<f64>() / n as f64;
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| se(&x[i], &x[j], p) + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect();
    let r: Vec<f64> = y.iter().map(|v| v - m).collect();
    let w = dense_solve(a.clone(), r.clone());
    // symmetric positive definite: no pivoting needed for the determinant
    let mut logdet = 0.0;
    for col in 0..n {
        logdet += a[col][col].ln();
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let fit: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
    -0.5 * fit - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// One random GP problem: inputs in `[0,1]^d`, targets in `[0,1]`.
pub struct Problem {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub kernel: KernelParams,
    pub probes: Vec<Vec<f64>>,
}

pub fn random_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=5);
    let t = rng.random_range(1..=50);
    let point = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
    let inputs: Vec<Vec<f64>> = (0..t).map(|_| point(&mut rng)).collect();
    let targets = (0..t).map(|_| rng.random::<f64>()).collect();
    let lengthscales = (0..d)
        .map(|_| 10f64.powf(rng.random_range(-1.0..0.3)))
        .collect();
    let kernel = KernelParams::new(
        lengthscales,
        10f64.powf(rng.random_range(-2.0..0.0)),
        10f64.powf(rng.random_range(-4.0..-1.0)),
    )
    .unwrap();
    let probes = (0..10).map(|_| point(&mut rng)).collect();
    Problem {
        inputs,
        targets,
        kernel,
        probes,
    }
}

/// Paths of a trained desk model and its assurance set on disk.
pub struct DeskFixture {
    pub model: std::path::PathBuf,
    pub images: std::path::PathBuf,
    pub labels: std::path::PathBuf,
    pub clean_accuracy: f64,
}

/// Trains a model on the generated digit corpus and writes it with its
/// assurance set under `dir`.
pub fn desk_fixture(dir: &std::path::Path, train: usize, assurance: usize) -> DeskFixture {
    use maid_core::{digits, evaluate_accuracy, idx, train_on_set, DistortionParams, TrainConfig};
    let (train_set, assurance_set) = digits::desk_corpus(train, assurance, 7).unwrap();
    let model = train_on_set(&train_set, &TrainConfig::default()).unwrap();
    let fx = DeskFixture {
        model: dir.join("model.txt"),
        images: dir.join("assurance-images.idx"),
        labels: dir.join("assurance-labels.idx"),
        clean_accuracy: evaluate_accuracy(&model, &assurance_set, &DistortionParams::IDENTITY)
            .unwrap(),
    };
    model.export(&fx.model).unwrap();
    idx::write_set(
        &assurance_set,
        &fx.images,
        &fx.labels,
        (digits::SIDE, digits::SIDE),
    )
    .unwrap();
    fx
}

/// JSON config for a model source with an absolute threshold.
pub fn model_config(fx: &DeskFixture, threshold: &str, extra: &str) -> maid_core::ExperimentConfig {
    maid_core::ExperimentConfig::from_json(&format!(
        r#"{{"source": {{"kind": "model", "model": {:?}, "images": {:?}, "labels": {:?}}},
            "threshold": {threshold} {extra}}}"#,
        fx.model, fx.images, fx.labels
    ))
    .unwrap()
}

/// Rotation, scale and translation by inverse nearest-neighbor lookup on a
/// grid `factor` times finer per axis, averaged back down to pixels. Written
/// from the geometric definition without sharing code with the engine.
pub fn supersampled(
    img: &maid_core::Image,
    p: &maid_core::DistortionParams,
    factor: usize,
) -> maid_core::Image {
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let theta = p.rotation.to_radians();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for i in 0..factor {
                for j in 0..factor {
                    // sub-sample position in output pixel coordinates
                    let x = c as f64 - 0.5 + (j as f64 + 0.5) / factor as f64;
                    let y = r as f64 - 0.5 + (i as f64 + 0.5) / factor as f64;
                    // undo translation, then rotation (counter-clockwise on
                    // screen), then scale
                    let dx = x - cx - p.translate_x * w as f64;
                    let dy = y - cy - p.translate_y * h as f64;
                    let rx = theta.cos() * dx - theta.sin() * dy;
                    let ry = theta.sin() * dx + theta.cos() * dy;
                    let sx = (rx / p.scale + cx).round();
                    let sy = (ry / p.scale + cy).round();
                    if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                        acc += img.get(sy as usize, sx as usize);
                    }
                }
            }
            out.push(acc / (factor * factor) as f64);
        }
    }
    maid_core::Image::new(w, h, out).unwrap()
}

pub fn single_pixel(w: usize, row: usize, col: usize) -> maid_core::Image {
    let mut px = vec![0.0; w * w];
    px[row * w + col] = 1.0;
    maid_core::Image::new(w, w, px).unwrap()
}

pub fn blob(w: usize) -> maid_core::Image {
    // smooth off-center blob so rotations are visible
    let px = (0..w * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            let d2 = (r - 0.35 * w as f64).powi(2) + (c - 0.6 * w as f64).powi(2);
            (-d2 / (0.02 * (w * w) as f64)).exp()
        })
        .collect();
    maid_core::Image::new(w, w, px).unwrap()
}

pub fn argmax(img: &maid_core::Image) -> (usize, usize) {
    let i = img
        .pixels()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .unwrap()
        .0;
    (i / img.width(), i % img.width())
}
