//! Mini-batch training for [`Model`].
//!
//! During training the normalization layer uses per-batch statistics and
//! folds them into the running estimates with momentum 0.9:
//! `running = 0.9 * running + 0.1 * batch`. Batch variances are the biased
//! (population) estimate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::AssuranceSet;
use crate::error::{Error, Result};
use crate::model::{softmax, Model};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// SGD momentum on the weights.
    pub momentum: f64,
    /// Momentum of the running normalization statistics.
    pub norm_momentum: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 64,
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            norm_momentum: 0.9,
            epsilon: 1e-5,
            seed: 0,
        }
    }
}

struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    scale: Vec<f64>,
    shift: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Grads {
    fn zeros_like(m: &Model) -> Self {
        Grads {
            w1: vec![0.0; m.layer1_weight.len()],
            b1: vec![0.0; m.hidden_dim],
            scale: vec![0.0; m.hidden_dim],
            shift: vec![0.0; m.hidden_dim],
            w2: vec![0.0; m.layer2_weight.len()],
            b2: vec![0.0; m.class_count],
        }
    }

    fn clear(&mut self) {
        for v in [
            &mut self.w1,
            &mut self.b1,
            &mut self.scale,
            &mut self.shift,
            &mut self.w2,
            &mut self.b2,
        ] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn params_mut(m: &mut Model) -> [&mut Vec<f64>; 6] {
    [
        &mut m.layer1_weight,
        &mut m.layer1_bias,
        &mut m.scale,
        &mut m.shift,
        &mut m.layer2_weight,
        &mut m.layer2_bias,
    ]
}

fn grads_ref(g: &Grads) -> [&Vec<f64>; 6] {
    [&g.w1, &g.b1, &g.scale, &g.shift, &g.w2, &g.b2]
}

/// Trains a classifier on flattened feature vectors. Deterministic for a
/// given seed.
pub fn train_model(features: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<Model> {
    if features.is_empty() {
        return Err(Error::input("training corpus is empty"));
    }
    if features.len() != labels.len() {
        return Err(Error::input("features and labels differ in length"));
    }
    let input_dim = features[0].len();
    if input_dim == 0 || features.iter().any(|f| f.len() != input_dim) {
        return Err(Error::input(
            "feature vectors must share one positive length",
        ));
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; class_count];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::input("training corpus needs at least two classes"));
    }
    if cfg.hidden_dim == 0 || cfg.batch_size < 2 {
        return Err(Error::input(
            "hidden_dim must be positive and batch_size at least 2",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::zeros(input_dim, cfg.hidden_dim, class_count);
    model.seed = cfg.seed;
    model.epsilon = cfg.epsilon;
    let a1 = (6.0 / input_dim as f64).sqrt();
    for w in &mut model.layer1_weight {
        *w = rng.random_range(-a1..a1);
    }
    let a2 = (6.0 / (cfg.hidden_dim + class_count) as f64).sqrt();
    for w in &mut model.layer2_weight {
        *w = rng.random_range(-a2..a2);
    }

    let mut velocity = Grads::zeros_like(&model);
    let mut grads = Grads::zeros_like(&model);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut ws = Workspace::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            grads.clear();
            ws.step(&mut model, features, labels, batch, &mut grads, cfg);
            let v = params_mut_velocity(&mut velocity);
            for ((p, g), vel) in params_mut(&mut model)
                .into_iter()
                .zip(grads_ref(&grads))
                .zip(v)
            {
                for ((pi, gi), vi) in p.iter_mut().zip(g).zip(vel.iter_mut()) {
                    *vi = cfg.momentum * *vi - cfg.learning_rate * gi;
                    *pi += *vi;
                }
            }
        }
    }
    model.validate()?;
    Ok(model)
}

fn params_mut_velocity(g: &mut Grads) -> [&mut Vec<f64>; 6] {
    [
        &mut g.w1,
        &mut g.b1,
        &mut g.scale,
        &mut g.shift,
        &mut g.w2,
        &mut g.b2,
    ]
}

pub fn train_on_set(set: &AssuranceSet, cfg: &TrainConfig) -> Result<Model> {
    train_model(&set.features(), set.labels(), cfg)
}

#[derive(Default)]
struct Workspace {
    z: Vec<f64>,
    xhat: Vec<f64>,
    act: Vec<f64>,
    dlogits: Vec<f64>,
}

impl Workspace {
    /// Forward and backward pass over one batch, accumulating mean
    /// cross-entropy gradients into `g` and updating running statistics.
    fn step(
        &mut self,
        m: &mut Model,
        features: &[Vec<f64>],
        labels: &[usize],
        batch: &[usize],
        g: &mut Grads,
        cfg: &TrainConfig,
    ) {
        let b = batch.len();
        let h = m.hidden_dim;
        let c = m.class_count;
        let bf = b as f64;

        self.z.clear();
        for &idx in batch {
            let x = &features[idx];
            let start = self.z.len();
            self.z.extend_from_slice(&m.layer1_bias);
            let z = &mut self.z[start..];
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (zj, w) in z.iter_mut().zip(&m.layer1_weight[i * h..(i + 1) * h]) {
                    *zj += xi * w;
                }
            }
        }

        let mut mean = vec![0.0; h];
        for row in self.z.chunks(h) {
            for (mj, zj) in mean.iter_mut().zip(row) {
                *mj += zj;
            }
        }
        mean.iter_mut().for_each(|v| *v /= bf);
        let mut var = vec![0.0; h];
        for row in self.z.chunks(h) {
            for j in 0..h {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= bf);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + m.epsilon).sqrt()).collect();
        for j in 0..h {
            m.running_mean[j] =
                cfg.norm_momentum * m.running_mean[j] + (1.0 - cfg.norm_momentum) * mean[j];
            m.running_variance[j] =
                cfg.norm_momentum * m.running_variance[j] + (1.0 - cfg.norm_momentum) * var[j];
        }

        self.xhat.clear();
        self.act.clear();
        for row in self.z.chunks(h) {
            for j in 0..h {
                let xh = (row[j] - mean[j]) * inv_std[j];
                self.xhat.push(xh);
                self.act.push((m.scale[j] * xh + m.shift[j]).max(0.0));
            }
        }

        self.dlogits.clear();
        for (r, &idx) in batch.iter().enumerate() {
            let a = &self.act[r * h..(r + 1) * h];
            let mut logits = m.layer2_bias.clone();
            for (j, &aj) in a.iter().enumerate() {
                if aj == 0.0 {
                    continue;
                }
                for (l, w) in logits.iter_mut().zip(&m.layer2_weight[j * c..(j + 1) * c]) {
                    *l += aj * w;
                }
            }
            let mut p = softmax(&logits);
            p[labels[idx]] -= 1.0;
            p.iter_mut().for_each(|v| *v /= bf);
            self.dlogits.extend(p);
        }

        // layer 2 and the gradient reaching the activations
        let mut dy = vec![0.0; b * h];
        for r in 0..b {
            let a = &self.act[r * h..(r + 1) * h];
            let dl = &self.dlogits[r * c..(r + 1) * c];
            for (k, d) in dl.iter().enumerate() {
                g.b2[k] += d;
            }
            for j in 0..h {
                let w = &m.layer2_weight[j * c..(j + 1) * c];
                let gw = &mut g.w2[j * c..(j + 1) * c];
                let mut da = 0.0;
                for k in 0..c {
                    gw[k] += a[j] * dl[k];
                    da += w[k] * dl[k];
                }
                if a[j] > 0.0 {
                    dy[r * h + j] = da;
                }
            }
        }

        // normalization layer
        let mut sum_dxhat = vec![0.0; h];
        let mut sum_dxhat_xhat = vec![0.0; h];
        for r in 0..b {
            for j in 0..h {
                let d = dy[r * h + j];
                let xh = self.xhat[r * h + j];
                g.scale[j] += d * xh;
                g.shift[j] += d;
                let dxh = d * m.scale[j];
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * xh;
            }
        }
        for (r, &idx) in batch.iter().enumerate() {
            let mut dz = vec![0.0; h];
            for j in 0..h {
                let dxh = dy[r * h + j] * m.scale[j];
                let xh = self.xhat[r * h + j];
                dz[j] = inv_std[j] / bf * (bf * dxh - sum_dxhat[j] - xh * sum_dxhat_xhat[j]);
                g.b1[j] += dz[j];
            }
            for (i, &xi) in features[idx].iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (gw, d) in g.w1[i * h..(i + 1) * h].iter_mut().zip(&dz) {
                    *gw += xi * d;
                }
            }
        }
    }
}
