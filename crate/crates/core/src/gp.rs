//! Exact Gaussian-process regression over normalized distortion coordinates.
//!
//! The surrogate uses a squared-exponential kernel with one lengthscale per
//! input dimension and a constant prior mean equal to the sample mean of the
//! targets. Given training inputs `c_1..c_t` with targets `f_1..f_t`, the
//! posterior at a probe `c` is
//!
//! ```text
//! mu(c)      = m + k(c)^T (K + s_n I)^-1 (f - m)
//! sigma^2(c) = k(c, c) - k(c)^T (K + s_n I)^-1 k(c)
//! ```
//!
//! Both are computed through a lower Cholesky factor `L` of the regularized
//! kernel matrix, stored packed by rows so that adding an observation only
//! appends one row.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// First jitter tried when factorizing the kernel matrix.
pub const JITTER_START: f64 = 1e-8;
/// Largest jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Below this many observations hyperparameter fitting returns defaults.
pub const MIN_POINTS_FOR_FIT: usize = 5;

const DEFAULT_LENGTHSCALE: f64 = 0.2;
const DEFAULT_NOISE: f64 = 1e-4;
const SIGNAL_VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let p = KernelParams {
            lengthscales,
            signal_variance,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(
        dim: usize,
        lengthscale: f64,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance)
    }

    /// Parameters used whenever there are too few observations to fit:
    /// lengthscale 0.2, signal variance from the targets, noise 1e-4.
    pub fn defaults(dim: usize, targets: &[f64]) -> Self {
        KernelParams {
            lengthscales: vec![DEFAULT_LENGTHSCALE; dim],
            signal_variance: sample_variance(targets).max(SIGNAL_VARIANCE_FLOOR),
            noise_variance: DEFAULT_NOISE,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::input("kernel needs at least one lengthscale"));
        }
        if !self.lengthscales.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(Error::input(format!(
                "lengthscales must be positive, got {:?}",
                self.lengthscales
            )));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::input(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::input(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Squared-exponential covariance between two points.
pub fn kernel_eval(a: &[f64], b: &[f64], p: &KernelParams) -> Result<f64> {
    if a.len() != b.len() || a.len() != p.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {} with {} lengthscales",
            a.len(),
            b.len(),
            p.dim()
        )));
    }
    Ok(p.eval_unchecked(a, b))
}

pub(crate) fn sample_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = sample_mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Lower-triangular matrix stored row by row; row `i` holds `i + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PackedLower {
    data: Vec<f64>,
    n: usize,
}

impl PackedLower {
    fn with_capacity(n: usize) -> Self {
        PackedLower {
            data: Vec::with_capacity(n * (n + 1) / 2),
            n: 0,
        }
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n + 1);
        self.data.extend_from_slice(row);
        self.n += 1;
    }

    /// Solves `L v = b` in place.
    fn forward_solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let row = self.row(i);
            b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
        }
    }

    /// Solves `L^T v = b` in place.
    fn backward_solve(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let row = self.row(i);
            b[i] /= row[i];
            let bi = b[i];
            for (l, v) in row[..i].iter().zip(&mut b[..i]) {
                *v -= l * bi;
            }
        }
    }

    fn log_det_half(&self) -> f64 {
        (0..self.n).map(|i| self.row(i)[i].ln()).sum()
    }
}

/// Inner product with four independent accumulators so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cholesky factor of a symmetric matrix given through `entry(i, j)` for
/// `j <= i`, with `shift` added to the diagonal. `None` if not positive
/// definite.
fn cholesky(n: usize, shift: f64, entry: impl Fn(usize, usize) -> f64) -> Option<PackedLower> {
    let mut l = PackedLower::with_capacity(n);
    let mut row = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        for j in 0..=i {
            let mut s = entry(i, j);
            if i == j {
                s += shift;
            }
            if j < i {
                let lj = l.row(j);
                s -= dot(&row[..j], &lj[..j]);
                row.push(s / lj[j]);
            } else {
                s -= dot(&row[..i], &row[..i]);
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                row.push(s.sqrt());
            }
        }
        l.push_row(&row);
    }
    Some(l)
}

/// Factorizes `K + (noise + jitter) I`, escalating the jitter by factors of
/// ten from [`JITTER_START`] to [`JITTER_MAX`].
fn factorize(inputs: &[Vec<f64>], kernel: &KernelParams) -> Result<(PackedLower, f64)> {
    let n = inputs.len();
    let mut gram = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            gram.push(kernel.eval_unchecked(&inputs[i], &inputs[j]));
        }
    }
    let mut jitter = JITTER_START;
    loop {
        let shift = kernel.noise_variance + jitter;
        if let Some(l) = cholesky(n, shift, |i, j| gram[i * (i + 1) / 2 + j]) {
            return Ok((l, jitter));
        }
        if jitter >= JITTER_MAX {
            return Err(Error::Numerical {
                message: format!("kernel matrix of {n} points is not positive definite"),
                jitter,
            });
        }
        jitter *= 10.0;
    }
}

/// A conditioned Gaussian process. Immutable; [`GpPosterior::update`]
/// returns a new value.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    kernel: KernelParams,
    prior_mean: f64,
    jitter: f64,
    chol: PackedLower,
    /// `L^-1 (f - m)`
    whitened_residual: Vec<f64>,
    /// `(K + s_n I)^-1 (f - m)`
    alpha: Vec<f64>,
    /// Shared by posteriors whose factors agree on their common rows.
    lineage: u64,
}

static NEXT_LINEAGE: AtomicU64 = AtomicU64::new(1);

fn check_inputs(inputs: &[Vec<f64>], targets: &[f64], kernel: &KernelParams) -> Result<()> {
    kernel.validate()?;
    if inputs.is_empty() {
        return Err(Error::input("a GP needs at least one observation"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::input(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    for x in inputs {
        if x.len() != kernel.dim() {
            return Err(Error::input(format!(
                "input of dimension {} for a {}-dimensional kernel",
                x.len(),
                kernel.dim()
            )));
        }
    }
    for &y in targets {
        check_target(y)?;
    }
    Ok(())
}

fn check_target(y: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::input(format!("target {y} outside [0, 1]")));
    }
    Ok(())
}

fn duplicate_error(jitter: f64) -> Error {
    Error::Numerical {
        message: "duplicate inputs with zero noise make the kernel matrix singular".into(),
        jitter,
    }
}

impl GpPosterior {
    pub fn fit(inputs: Vec<Vec<f64>>, targets: Vec<f64>, kernel: KernelParams) -> Result<Self> {
        check_inputs(&inputs, &targets, &kernel)?;
        if kernel.noise_variance == 0.0 {
            for i in 0..inputs.len() {
                if inputs[..i].contains(&inputs[i]) {
                    return Err(duplicate_error(JITTER_START));
                }
            }
        }
        let (chol, jitter) = factorize(&inputs, &kernel)?;
        let mut gp = GpPosterior {
            inputs,
            targets,
            kernel,
            prior_mean: 0.0,
            jitter,
            chol,
            whitened_residual: Vec::new(),
            alpha: Vec::new(),
            lineage: NEXT_LINEAGE.fetch_add(1, Ordering::Relaxed),
        };
        gp.solve_weights();
        Ok(gp)
    }

    fn solve_weights(&mut self) {
        self.prior_mean = sample_mean(&self.targets);
        let mut r: Vec<f64> = self.targets.iter().map(|y| y - self.prior_mean).collect();
        self.chol.forward_solve(&mut r);
        self.whitened_residual = r.clone();
        self.chol.backward_solve(&mut r);
        self.alpha = r;
    }

    /// Conditions on one more observation by extending the Cholesky factor
    /// with a single row. Falls back to a full refactorization when the new
    /// pivot is not positive at the current jitter.
    pub fn update(&self, c: Vec<f64>, y: f64) -> Result<Self> {
        check_target(y)?;
        if c.len() != self.dim() {
            return Err(Error::input(format!(
                "input of dimension {} for a {}-dimensional GP",
                c.len(),
                self.dim()
            )));
        }
        if self.kernel.noise_variance == 0.0 && self.inputs.contains(&c) {
            return Err(duplicate_error(self.jitter));
        }
        let mut row = self.cross_covariance(&c);
        self.chol.forward_solve(&mut row);
        let pivot = self.kernel.signal_variance + self.kernel.noise_variance + self.jitter
            - row.iter().map(|v| v * v).sum::<f64>();

        let mut inputs = self.inputs.clone();
        let mut targets = self.targets.clone();
        inputs.push(c);
        targets.push(y);
        if pivot.is_nan() || pivot <= 0.0 {
            return Self::fit(inputs, targets, self.kernel.clone());
        }
        row.push(pivot.sqrt());
        let mut chol = self.chol.clone();
        chol.push_row(&row);
        let mut gp = GpPosterior {
            inputs,
            targets,
            kernel: self.kernel.clone(),
            prior_mean: 0.0,
            jitter: self.jitter,
            chol,
            whitened_residual: Vec::new(),
            alpha: Vec::new(),
            lineage: self.lineage,
        };
        gp.solve_weights();
        Ok(gp)
    }

    fn cross_covariance(&self, c: &[f64]) -> Vec<f64> {
        self.inputs
            .iter()
            .map(|x| self.kernel.eval_unchecked(x, c))
            .collect()
    }

    /// Posterior mean and variance at `c`. The variance is clamped at zero.
    pub fn predict(&self, c: &[f64]) -> Result<(f64, f64)> {
        if c.len() != self.dim() {
            return Err(Error::input(format!(
                "probe of dimension {} for a {}-dimensional GP",
                c.len(),
                self.dim()
            )));
        }
        Ok(self.predict_unchecked(c))
    }

    pub(crate) fn predict_unchecked(&self, c: &[f64]) -> (f64, f64) {
        let mut v = self.cross_covariance(c);
        self.chol.forward_solve(&mut v);
        self.moments_from_whitened(&v)
    }

    /// Mean and variance from `v = L^-1 k(c)`.
    #[inline]
    pub(crate) fn moments_from_whitened(&self, v: &[f64]) -> (f64, f64) {
        let mut mu = self.prior_mean;
        let mut explained = 0.0;
        for (vi, bi) in v.iter().zip(&self.whitened_residual) {
            mu += vi * bi;
            explained += vi * vi;
        }
        (mu, (self.kernel.signal_variance - explained).max(0.0))
    }

    /// Exact log marginal likelihood of the targets under this GP.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let fit: f64 = self.whitened_residual.iter().map(|v| v * v).sum();
        -0.5 * fit - self.chol.log_det_half() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Diagonal regularization actually used on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub(crate) fn lineage(&self) -> u64 {
        self.lineage
    }

    pub(crate) fn chol_row(&self, i: usize) -> &[f64] {
        self.chol.row(i)
    }

    /// Dense copy of the lower Cholesky factor.
    pub fn chol_factor(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[..=i].copy_from_slice(self.chol.row(i));
                r
            })
            .collect()
    }
}

/// Search schedule for kernel hyperparameters.
///
/// Candidates start from a fixed grid (isotropic lengthscale by noise level)
/// plus a few seeded random points and an optional warm start. The best
/// start is then polished by a coordinate-wise pattern search in log space.
#[derive(Debug, Clone)]
pub struct HyperSearch {
    pub seed: u64,
    pub random_starts: usize,
    pub max_evaluations: usize,
    pub warm_start: Option<KernelParams>,
}

impl Default for HyperSearch {
    fn default() -> Self {
        HyperSearch {
            seed: 0,
            random_starts: 2,
            max_evaluations: 120,
            warm_start: None,
        }
    }
}

const GRID_LENGTHSCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
const GRID_NOISES: [f64; 3] = [1e-6, 1e-4, 1e-2];

// Search box, natural log units.
const LOG_LENGTHSCALE: (f64, f64) = (-4.6, 3.0); // 0.01 .. 20
const LOG_SIGNAL: (f64, f64) = (-13.8, 2.3); // 1e-6 .. 10
const LOG_NOISE: (f64, f64) = (-13.8, -1.4); // 1e-6 .. 0.25

impl HyperSearch {
    pub fn fit(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<KernelParams> {
        let dim = inputs
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::input("no inputs"))?;
        let defaults = KernelParams::defaults(dim, targets);
        check_inputs(inputs, targets, &defaults)?;
        if inputs.len() < MIN_POINTS_FOR_FIT {
            return Ok(defaults);
        }

        let signal = defaults.signal_variance;
        let mut starts: Vec<Vec<f64>> = Vec::new();
        for &l in &GRID_LENGTHSCALES {
            for &n in &GRID_NOISES {
                starts.push(to_log(&KernelParams {
                    lengthscales: vec![l; dim],
                    signal_variance: signal,
                    noise_variance: n,
                }));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_starts {
            let mut theta = Vec::with_capacity(dim + 2);
            for _ in 0..dim {
                theta.push(
                    rng.random_range(LOG_LENGTHSCALE.0..LOG_LENGTHSCALE.1)
                        .min(1.0),
                );
            }
            theta.push(signal.ln() + rng.random_range(-1.0..1.0));
            theta.push(rng.random_range(LOG_NOISE.0..LOG_NOISE.1));
            starts.push(theta);
        }
        if let Some(w) = &self.warm_start {
            if w.dim() == dim && w.validate().is_ok() {
                starts.push(to_log(w));
            }
        }

        let objective = |theta: &[f64]| log_likelihood_at(inputs, targets, theta);
        let mut evals = 0usize;
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in starts {
            let s = clamp_log(s);
            let v = objective(&s);
            evals += 1;
            // strict improvement keeps the lowest index on ties
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((s, v));
            }
        }
        let (mut theta, mut value) = best.expect("at least one start");

        let mut step = std::f64::consts::LN_2;
        while step > 0.02 && evals < self.max_evaluations {
            let mut improved = false;
            for j in 0..theta.len() {
                for dir in [1.0, -1.0] {
                    if evals >= self.max_evaluations {
                        break;
                    }
                    let mut trial = theta.clone();
                    trial[j] += dir * step;
                    let trial = clamp_log(trial);
                    if trial[j] == theta[j] {
                        continue;
                    }
                    let v = objective(&trial);
                    evals += 1;
                    if v > value {
                        theta = trial;
                        value = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if !value.is_finite() {
            return Ok(defaults);
        }
        Ok(from_log(&theta))
    }
}

/// Hyperparameters maximizing the log marginal likelihood under the default
/// search schedule. Fewer than five observations yield the defaults.
pub fn fit_hyperparameters(inputs: &[Vec<f64>], targets: &[f64]) -> Result<KernelParams> {
    HyperSearch::default().fit(inputs, targets)
}

fn to_log(p: &KernelParams) -> Vec<f64> {
    let mut t: Vec<f64> = p.lengthscales.iter().map(|l| l.ln()).collect();
    t.push(p.signal_variance.ln());
    t.push(p.noise_variance.max(1e-12).ln());
    t
}

fn from_log(theta: &[f64]) -> KernelParams {
    let d = theta.len() - 2;
    KernelParams {
        lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
        signal_variance: theta[d].exp(),
        noise_variance: theta[d + 1].exp(),
    }
}

fn clamp_log(mut theta: Vec<f64>) -> Vec<f64> {
    let d = theta.len() - 2;
    for t in &mut theta[..d] {
        *t = t.clamp(LOG_LENGTHSCALE.0, LOG_LENGTHSCALE.1);
    }
    theta[d] = theta[d].clamp(LOG_SIGNAL.0, LOG_SIGNAL.1);
    theta[d + 1] = theta[d + 1].clamp(LOG_NOISE.0, LOG_NOISE.1);
    theta
}

fn log_likelihood_at(inputs: &[Vec<f64>], targets: &[f64], theta: &[f64]) -> f64 {
    let kernel = from_log(theta);
    let Ok((chol, _)) = factorize(inputs, &kernel) else {
        return f64::NEG_INFINITY;
    };
    let m = sample_mean(targets);
    let mut r: Vec<f64> = targets.iter().map(|y| y - m).collect();
    chol.forward_solve(&mut r);
    let fit: f64 = r.iter().map(|v| v * v).sum();
    let n = targets.len() as f64;
    -0.5 * fit - chol.log_det_half() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Log marginal likelihood of `targets` for the given hyperparameters.
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: &KernelParams,
) -> Result<f64> {
    check_inputs(inputs, targets, kernel)?;
    Ok(log_likelihood_at(inputs, targets, &to_log(kernel)))
}
