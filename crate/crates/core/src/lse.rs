//! Active level-set estimation over a distortion search space.
//!
//! A run seeds the surrogate with `init_points` uniform samples, then spends
//! the rest of its budget on points maximizing the Straddle score
//! `1.96 sigma - |mu - h|`. Once the budget is spent a level is labeled
//! usable iff `mu - 2 sigma >= h`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionKind, DistortionParams, REGISTRY};
use crate::error::{Error, Result};
use crate::gp::{dot, GpPosterior, HyperSearch, KernelParams, MIN_POINTS_FOR_FIT};

/// Width multiplier on sigma in the acquisition score.
pub const STRADDLE_WIDTH: f64 = 1.96;
/// Sigma multiplier in the classification rule.
pub const CLASSIFY_WIDTH: f64 = 2.0;
/// Coordinate step of the refinement pass, in normalized units.
pub const REFINE_STEP: f64 = 0.01;

const INIT_STREAM: u64 = 0;
const POOL_STREAM_BASE: u64 = 1 << 32;

/// `1.96 sigma - |mu - h|`
pub fn straddle_score(mu: f64, sigma: f64, h: f64) -> f64 {
    STRADDLE_WIDTH * sigma - (mu - h).abs()
}

/// 1 iff `mu - 2 sigma >= h`.
pub fn classification_rule(mu: f64, sigma: f64, h: f64) -> u8 {
    u8::from(mu - CLASSIFY_WIDTH * sigma >= h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: DistortionKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for SearchSpace {
    type Error = Error;
    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        SearchSpace::new(dims)
    }
}

impl From<SearchSpace> for Vec<Dimension> {
    fn from(s: SearchSpace) -> Self {
        s.dims
    }
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::input("search space needs at least one dimension"));
        }
        for (i, d) in dims.iter().enumerate() {
            if d.lower.is_nan() || d.upper.is_nan() || d.lower >= d.upper {
                return Err(Error::input(format!(
                    "{}: lower {} must be below upper {}",
                    d.name, d.lower, d.upper
                )));
            }
            let (lo, hi) = d.name.domain();
            if d.lower < lo || d.upper > hi {
                return Err(Error::input(format!(
                    "{}: range [{}, {}] leaves the domain [{lo}, {hi}]",
                    d.name, d.lower, d.upper
                )));
            }
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::input(format!("{} listed twice", d.name)));
            }
        }
        Ok(SearchSpace { dims })
    }

    /// All five distortions over their full domains.
    pub fn full() -> Self {
        Self::of(&REGISTRY)
    }

    /// The given distortions over their full domains.
    pub fn of(kinds: &[DistortionKind]) -> Self {
        let dims = kinds
            .iter()
            .map(|&name| {
                let (lower, upper) = name.domain();
                Dimension { name, lower, upper }
            })
            .collect();
        Self::new(dims).expect("registry domains are valid")
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.dims
            .iter()
            .map(|d| d.name.name().to_string())
            .collect()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::input(format!(
                "level has {n} values for a {}-dimensional space",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, level: &DistortionLevel) -> bool {
        level.values.len() == self.dim()
            && self
                .dims
                .iter()
                .zip(&level.values)
                .all(|(d, v)| *v >= d.lower && *v <= d.upper)
    }

    /// Affine image of a level in `[0, 1]^d`.
    pub fn normalize(&self, level: &DistortionLevel) -> Result<Vec<f64>> {
        self.check_dim(level.values.len())?;
        if !self.contains(level) {
            return Err(Error::input(format!(
                "level {:?} outside the search space",
                level.values
            )));
        }
        Ok(self
            .dims
            .iter()
            .zip(&level.values)
            .map(|(d, v)| (v - d.lower) / (d.upper - d.lower))
            .collect())
    }

    pub fn denormalize(&self, u: &[f64]) -> DistortionLevel {
        DistortionLevel::new(
            self.dims
                .iter()
                .zip(u)
                .map(|(d, x)| (d.lower + x * (d.upper - d.lower)).clamp(d.lower, d.upper))
                .collect(),
        )
    }

    /// Concrete distortion settings; dimensions not in the space stay at
    /// their identity value.
    pub fn params(&self, level: &DistortionLevel) -> Result<DistortionParams> {
        self.check_dim(level.values.len())?;
        let mut p = DistortionParams::IDENTITY;
        for (d, v) in self.dims.iter().zip(&level.values) {
            p.set(d.name, *v);
        }
        Ok(p)
    }

    /// `n` uniform points in normalized coordinates.
    pub fn uniform_normalized(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..self.dim())
                    .map(|_| rng.random_range(0.0..=1.0))
                    .collect()
            })
            .collect()
    }
}

/// A point of the search space in native units (degrees, ratios, fractions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistortionLevel {
    pub values: Vec<f64>,
}

impl DistortionLevel {
    pub fn new(values: Vec<f64>) -> Self {
        DistortionLevel { values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub level: DistortionLevel,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssuranceRunConfig {
    pub threshold: f64,
    pub budget: usize,
    pub init_points: usize,
    pub seed: u64,
    pub candidate_pool_size: usize,
    pub refit_every: usize,
}

impl Default for AssuranceRunConfig {
    fn default() -> Self {
        AssuranceRunConfig {
            threshold: 0.85,
            budget: 400,
            init_points: 20,
            seed: 0,
            candidate_pool_size: 10_000,
            refit_every: 10,
        }
    }
}

impl AssuranceRunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::input(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.init_points == 0 || self.init_points >= self.budget {
            return Err(Error::input(format!(
                "need 0 < init_points ({}) < budget ({})",
                self.init_points, self.budget
            )));
        }
        if self.candidate_pool_size < 100 {
            return Err(Error::input("candidate_pool_size must be at least 100"));
        }
        if self.refit_every == 0 {
            return Err(Error::input("refit_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    InProgress,
    BudgetExhausted,
}

/// `L^-1 k(candidate)` for a fixed candidate pool, extended one row per
/// observation while the factor's lineage is unchanged.
#[derive(Debug, Clone)]
struct AcquisitionCache {
    epoch: u64,
    lineage: u64,
    pool: Vec<Vec<f64>>,
    whitened: Vec<Vec<f64>>,
}

impl AcquisitionCache {
    fn new(space: &SearchSpace, config: &AssuranceRunConfig, epoch: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(POOL_STREAM_BASE + epoch);
        let pool = space.uniform_normalized(config.candidate_pool_size, &mut rng);
        AcquisitionCache {
            epoch,
            lineage: 0,
            whitened: vec![Vec::with_capacity(config.budget); pool.len()],
            pool,
        }
    }

    fn sync(&mut self, gp: &GpPosterior) {
        if self.lineage != gp.lineage() || self.whitened.first().is_some_and(|w| w.len() > gp.len())
        {
            self.lineage = gp.lineage();
            self.whitened.iter_mut().for_each(Vec::clear);
        }
        let have = self.whitened.first().map_or(0, Vec::len);
        let kernel = gp.kernel();
        for i in have..gp.len() {
            let row = gp.chol_row(i);
            let x = &gp.inputs()[i];
            for (cand, v) in self.pool.iter().zip(&mut self.whitened) {
                let s = kernel.eval_unchecked(x, cand) - dot(&row[..i], v);
                v.push(s / row[i]);
            }
        }
    }
}

/// Index and value of the largest score; the lowest index wins ties.
fn first_max(scores: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// State of one active-sampling run.
#[derive(Debug, Clone)]
pub struct AssuranceRun {
    space: SearchSpace,
    config: AssuranceRunConfig,
    history: Vec<Observation>,
    gp: Option<GpPosterior>,
    status: RunStatus,
    refits: u64,
    cache: Option<AcquisitionCache>,
}

impl AssuranceRun {
    pub fn new(space: SearchSpace, config: AssuranceRunConfig) -> Result<Self> {
        config.validate()?;
        Ok(AssuranceRun {
            space,
            config,
            history: Vec::new(),
            gp: None,
            status: RunStatus::InProgress,
            refits: 0,
            cache: None,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn config(&self) -> &AssuranceRunConfig {
        &self.config
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn gp(&self) -> Option<&GpPosterior> {
        self.gp.as_ref()
    }

    pub fn status(&self) -> RunStatus {
        self.status
    }

    /// The seeded uniform points evaluated before acquisition starts.
    pub fn initial_design(&self) -> Vec<DistortionLevel> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(INIT_STREAM);
        self.space
            .uniform_normalized(self.config.init_points, &mut rng)
            .iter()
            .map(|u| self.space.denormalize(u))
            .collect()
    }

    fn refit_due(&self, n: usize) -> bool {
        let init = self.config.init_points;
        n >= MIN_POINTS_FOR_FIT
            && (n == init || (n > init && (n - init).is_multiple_of(self.config.refit_every)))
    }

    /// Records an observation and conditions the surrogate on it.
    pub fn observe(&mut self, level: DistortionLevel, accuracy: f64) -> Result<()> {
        if self.status == RunStatus::BudgetExhausted {
            return Err(Error::State(format!(
                "budget of {} observations already spent",
                self.config.budget
            )));
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::input(format!("accuracy {accuracy} outside [0, 1]")));
        }
        let u = self.space.normalize(&level)?;
        let n = self.history.len() + 1;

        let due = self.refit_due(n);
        let gp = match &self.gp {
            Some(gp) if !due => gp.update(u, accuracy)?,
            previous => {
                let warm_start = previous.as_ref().map(|g| g.kernel().clone());
                let mut inputs = self.normalized_inputs()?;
                inputs.push(u);
                let mut targets: Vec<f64> = self.history.iter().map(|o| o.accuracy).collect();
                targets.push(accuracy);
                let kernel = if due {
                    HyperSearch {
                        seed: self.config.seed.wrapping_add(self.refits + 1),
                        warm_start,
                        ..HyperSearch::default()
                    }
                    .fit(&inputs, &targets)?
                } else {
                    KernelParams::defaults(self.space.dim(), &targets)
                };
                GpPosterior::fit(inputs, targets, kernel)?
            }
        };
        if due {
            self.refits += 1;
        }
        self.gp = Some(gp);
        self.history.push(Observation { level, accuracy });
        if self.history.len() >= self.config.budget {
            self.status = RunStatus::BudgetExhausted;
        }
        Ok(())
    }

    fn normalized_inputs(&self) -> Result<Vec<Vec<f64>>> {
        self.history
            .iter()
            .map(|o| self.space.normalize(&o.level))
            .collect()
    }

    fn fitted(&self) -> Result<&GpPosterior> {
        self.gp
            .as_ref()
            .ok_or_else(|| Error::State("no observations yet".into()))
    }

    /// The candidate maximizing the Straddle score: best of a seeded uniform
    /// pool (lowest index on ties), then one coordinate-wise refinement pass.
    pub fn suggest_next(&mut self) -> Result<DistortionLevel> {
        if self.status == RunStatus::BudgetExhausted {
            return Err(Error::State("budget exhausted".into()));
        }
        let gp = self
            .gp
            .as_ref()
            .ok_or_else(|| Error::State("no observations yet".into()))?;
        let h = self.config.threshold;
        let cache = match &mut self.cache {
            Some(c) if c.epoch == self.refits => c,
            slot => slot.insert(AcquisitionCache::new(
                &self.space,
                &self.config,
                self.refits,
            )),
        };
        cache.sync(gp);

        let (best, mut best_score) = first_max(cache.whitened.iter().map(|v| {
            let (mu, s2) = gp.moments_from_whitened(v);
            straddle_score(mu, s2.sqrt(), h)
        }));

        let mut u = cache.pool[best].clone();
        for j in 0..u.len() {
            for step in [REFINE_STEP, -REFINE_STEP] {
                let mut trial = u.clone();
                trial[j] = (trial[j] + step).clamp(0.0, 1.0);
                if trial[j] == u[j] {
                    continue;
                }
                let (mu, s2) = gp.predict_unchecked(&trial);
                let score = straddle_score(mu, s2.sqrt(), h);
                if score > best_score {
                    u = trial;
                    best_score = score;
                    break;
                }
            }
        }
        Ok(self.space.denormalize(&u))
    }

    /// Posterior mean and standard deviation at a level.
    pub fn predict(&self, level: &DistortionLevel) -> Result<(f64, f64)> {
        self.predict_normalized(&self.space.normalize(level)?)
    }

    pub fn predict_normalized(&self, u: &[f64]) -> Result<(f64, f64)> {
        let (mu, s2) = self.fitted()?.predict(u)?;
        Ok((mu, s2.sqrt()))
    }

    pub fn classify(&self, level: &DistortionLevel) -> Result<u8> {
        self.classify_normalized(&self.space.normalize(level)?)
    }

    pub fn classify_normalized(&self, u: &[f64]) -> Result<u8> {
        let (mu, sigma) = self.predict_normalized(u)?;
        Ok(classification_rule(mu, sigma, self.config.threshold))
    }
}

/// Runs the full loop against an accuracy oracle. An oracle failure aborts
/// the run and returns the observations gathered so far inside the error.
pub fn run_lse<F>(
    space: SearchSpace,
    config: AssuranceRunConfig,
    mut oracle: F,
) -> Result<AssuranceRun>
where
    F: FnMut(&DistortionLevel) -> Result<f64>,
{
    let mut run = AssuranceRun::new(space, config)?;
    let mut query = |run: &mut AssuranceRun, level: DistortionLevel| -> Result<()> {
        let acc = oracle(&level).map_err(|e| Error::Oracle {
            message: e.to_string(),
            history: run.history.clone(),
        })?;
        run.observe(level, acc)
    };
    for level in run.initial_design() {
        query(&mut run, level)?;
    }
    while run.status == RunStatus::InProgress {
        let level = run.suggest_next()?;
        query(&mut run, level)?;
    }
    Ok(run)
}
