//! End-to-end assurance experiments driven by a JSON config.

use std::cell::Cell;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::AssuranceSet;
use crate::distortion::DistortionParams;
use crate::error::{Error, Result};
use crate::grid::{build_grid, f1_score, EvaluationGrid, F1Score, RandomBaseline};
use crate::idx;
use crate::lse::{classification_rule, run_lse, AssuranceRunConfig, DistortionLevel, SearchSpace};
use crate::model::{argmax, evaluate_accuracy, Model};
use crate::report::{AssuranceReport, GridRecord};
use crate::surfaces::BenchmarkSurface;

/// Default confidence cut for synthetic images.
pub const DEFAULT_ALPHA: f64 = 0.8;
/// Default images per class in few-shot runs.
pub const DEFAULT_FEW_SHOT_PER_CLASS: usize = 5;

/// File names looked up when a synthetic input is given as a directory.
pub const SYNTHETIC_IMAGES_FILE: &str = "synthetic-images.idx";
pub const SYNTHETIC_LABELS_FILE: &str = "synthetic-labels.idx";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// Closed-form surface; no images involved.
    Surface { name: BenchmarkSurface },
    /// A trained model scored on an IDX assurance set.
    Model {
        model: PathBuf,
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Absolute(f64),
    /// `h = clean accuracy - below_clean`, measured on the full assurance set.
    BelowClean {
        below_clean: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInput {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShot {
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default)]
    pub synthetic: Option<SyntheticInput>,
}

fn default_per_class() -> usize {
    DEFAULT_FEW_SHOT_PER_CLASS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: Source,
    pub threshold: Threshold,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_init_points")]
    pub init_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pool")]
    pub candidate_pool_size: usize,
    #[serde(default = "default_refit")]
    pub refit_every: usize,
    #[serde(default = "default_points_per_dim")]
    pub points_per_dim: usize,
    /// Defaults to all five distortions over their full domains.
    #[serde(default = "SearchSpace::full")]
    pub space: SearchSpace,
    #[serde(default)]
    pub few_shot: Option<FewShot>,
}

fn default_budget() -> usize {
    AssuranceRunConfig::default().budget
}
fn default_init_points() -> usize {
    AssuranceRunConfig::default().init_points
}
fn default_pool() -> usize {
    AssuranceRunConfig::default().candidate_pool_size
}
fn default_refit() -> usize {
    AssuranceRunConfig::default().refit_every
}
fn default_points_per_dim() -> usize {
    5
}

impl ExperimentConfig {
    pub fn for_surface(surface: BenchmarkSurface, threshold: f64) -> Self {
        ExperimentConfig {
            source: Source::Surface { name: surface },
            threshold: Threshold::Absolute(threshold),
            budget: default_budget(),
            init_points: default_init_points(),
            seed: 0,
            candidate_pool_size: default_pool(),
            refit_every: default_refit(),
            points_per_dim: default_points_per_dim(),
            space: SearchSpace::full(),
            few_shot: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; relative paths inside it resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Source::Model {
            model,
            images,
            labels,
        } = &mut self.source
        {
            fix(model);
            fix(images);
            fix(labels);
        }
        if let Some(FewShot {
            synthetic: Some(s), ..
        }) = &mut self.few_shot
        {
            fix(&mut s.images);
            fix(&mut s.labels);
        }
    }

    pub fn run_config(&self, threshold: f64) -> AssuranceRunConfig {
        AssuranceRunConfig {
            threshold,
            budget: self.budget,
            init_points: self.init_points,
            seed: self.seed,
            candidate_pool_size: self.candidate_pool_size,
            refit_every: self.refit_every,
        }
    }

    /// Short hash of the config with the seed cleared, so seed sweeps of one
    /// config share a prefix.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..6])
    }

    /// `<out>/<hash>-seed<seed>`
    pub fn run_dir(&self, out: &Path) -> PathBuf {
        out.join(format!("{}-seed{}", self.hash(), self.seed))
    }
}

/// Loads synthetic images and keeps those the model is confident about:
/// `max softmax > alpha`. Labels come from the label file.
pub fn ingest_synthetic(
    images: &Path,
    labels: &Path,
    model: &Model,
    alpha: f64,
) -> Result<AssuranceSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!("alpha {alpha} outside [0, 1]")));
    }
    let set = idx::read_set(images, labels)?;
    let mut kept_images = Vec::new();
    let mut kept_labels = Vec::new();
    for (img, label) in set.iter() {
        let p = model.predict_proba(img)?;
        if p[argmax(&p)] > alpha {
            kept_images.push(img.clone());
            kept_labels.push(label);
        }
    }
    AssuranceSet::new(kept_images, kept_labels)
}

/// Resolves `--synthetic <path>`: a directory holding the two conventional
/// files, or an image file whose label file is found by replacing `images`
/// with `labels` in the file name.
pub fn synthetic_paths(path: &Path) -> Result<(PathBuf, PathBuf)> {
    if path.is_dir() {
        return Ok((
            path.join(SYNTHETIC_IMAGES_FILE),
            path.join(SYNTHETIC_LABELS_FILE),
        ));
    }
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad synthetic path {}", path.display())))?;
    if !name.contains("images") {
        return Err(Error::Config(format!(
            "cannot infer the label file for {}; pass a directory or a name containing `images`",
            path.display()
        )));
    }
    Ok((
        path.to_path_buf(),
        path.with_file_name(name.replacen("images", "labels", 1)),
    ))
}

fn require_file(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(Error::Config(format!("missing file {}", p.display())));
    }
    Ok(())
}

/// What the oracle evaluates: an analytic surface, or a model on two sets
/// (the full set for ground truth, the possibly reduced set for sampling).
#[allow(clippy::large_enum_variant)]
enum Subject {
    Surface(BenchmarkSurface),
    Model {
        model: Model,
        truth_set: AssuranceSet,
        sample_set: AssuranceSet,
        synthetic_accepted: usize,
    },
}

impl Subject {
    fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.source {
            Source::Surface { name } => {
                if cfg.few_shot.is_some() {
                    return Err(Error::Config("few-shot mode needs a model source".into()));
                }
                Ok(Subject::Surface(*name))
            }
            Source::Model {
                model,
                images,
                labels,
            } => {
                for p in [model, images, labels] {
                    require_file(p)?;
                }
                let model = Model::import(model)?;
                let truth_set = idx::read_set(images, labels)?;
                if truth_set.is_empty() {
                    return Err(Error::Config(format!(
                        "assurance set {} is empty",
                        images.display()
                    )));
                }
                let (sample_set, synthetic_accepted) = match &cfg.few_shot {
                    None => (truth_set.clone(), 0),
                    Some(fs) => {
                        let base = truth_set.few_shot(fs.per_class);
                        match &fs.synthetic {
                            None => (base, 0),
                            Some(s) => {
                                require_file(&s.images)?;
                                require_file(&s.labels)?;
                                let extra =
                                    ingest_synthetic(&s.images, &s.labels, &model, s.alpha)?;
                                let n = extra.len();
                                (base.merged(&extra), n)
                            }
                        }
                    }
                };
                Ok(Subject::Model {
                    model,
                    truth_set,
                    sample_set,
                    synthetic_accepted,
                })
            }
        }
    }

    fn threshold(&self, t: Threshold) -> Result<f64> {
        let h = match (t, self) {
            (Threshold::Absolute(h), _) => h,
            (
                Threshold::BelowClean { below_clean },
                Subject::Model {
                    model, truth_set, ..
                },
            ) => evaluate_accuracy(model, truth_set, &DistortionParams::IDENTITY)? - below_clean,
            (Threshold::BelowClean { .. }, Subject::Surface(_)) => {
                return Err(Error::Config(
                    "`below_clean` thresholds need a model source".into(),
                ))
            }
        };
        if !(0.0..=1.0).contains(&h) {
            return Err(Error::Config(format!("threshold {h} outside [0, 1]")));
        }
        Ok(h)
    }

    fn accuracy(&self, space: &SearchSpace, level: &DistortionLevel, truth: bool) -> Result<f64> {
        match self {
            Subject::Surface(s) => Ok(s.evaluate(&space.normalize(level)?)),
            Subject::Model {
                model,
                truth_set,
                sample_set,
                ..
            } => {
                let set = if truth { truth_set } else { sample_set };
                evaluate_accuracy(model, set, &space.params(level)?)
            }
        }
    }
}

/// Ground truth for a config: the grid labeled by the oracle on the full set.
pub fn build_truth_grid(cfg: &ExperimentConfig) -> Result<EvaluationGrid> {
    let subject = Subject::load(cfg)?;
    let h = subject.threshold(cfg.threshold)?;
    build_grid(
        &cfg.space,
        cfg.points_per_dim,
        |l| subject.accuracy(&cfg.space, l, true),
        h,
    )
}

/// Runs the LSE loop against the configured oracle, classifies the whole
/// grid and scores it. Oracle calls are exactly `budget + grid size`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AssuranceReport> {
    let start = Instant::now();
    let subject = Subject::load(cfg)?;
    let h = subject.threshold(cfg.threshold)?;
    let calls = Cell::new(0u64);
    let grid = build_grid(
        &cfg.space,
        cfg.points_per_dim,
        |l| {
            calls.set(calls.get() + 1);
            subject.accuracy(&cfg.space, l, true)
        },
        h,
    )?;
    assess(cfg, &subject, &grid, &calls, start)
}

/// Like [`run_experiment`] but scores against a grid built earlier, for
/// seed sweeps that share one truth grid. Only the loop's oracle calls are
/// counted.
pub fn run_experiment_on_grid(
    cfg: &ExperimentConfig,
    grid: &EvaluationGrid,
) -> Result<AssuranceReport> {
    let start = Instant::now();
    let subject = Subject::load(cfg)?;
    check_grid(cfg, &subject, grid)?;
    assess(cfg, &subject, grid, &Cell::new(0), start)
}

/// F1 of the random-sampling baseline against the grid truth, spending the
/// same budget on the same oracle as the LSE loop.
pub fn run_baseline(cfg: &ExperimentConfig, grid: &EvaluationGrid) -> Result<F1Score> {
    let subject = Subject::load(cfg)?;
    check_grid(cfg, &subject, grid)?;
    let space = &cfg.space;
    let baseline = RandomBaseline::fit(space, cfg.budget, cfg.seed, grid.threshold, |l| {
        subject.accuracy(space, l, false)
    })?;
    let pred = grid
        .points
        .iter()
        .map(|l| Ok(baseline.classify_normalized(&space.normalize(l)?)))
        .collect::<Result<Vec<u8>>>()?;
    f1_score(&grid.truth, &pred)
}

fn check_grid(cfg: &ExperimentConfig, subject: &Subject, grid: &EvaluationGrid) -> Result<()> {
    let h = subject.threshold(cfg.threshold)?;
    let expected = cfg.points_per_dim.checked_pow(cfg.space.dim() as u32);
    if grid.threshold != h || expected != Some(grid.len()) {
        return Err(Error::Config(
            "grid was built for a different config".into(),
        ));
    }
    Ok(())
}

fn assess(
    cfg: &ExperimentConfig,
    subject: &Subject,
    grid: &EvaluationGrid,
    calls: &Cell<u64>,
    start: Instant,
) -> Result<AssuranceReport> {
    let h = grid.threshold;
    let run_cfg = cfg.run_config(h);
    run_cfg
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    let space = &cfg.space;
    let run = run_lse(space.clone(), run_cfg, |l| {
        calls.set(calls.get() + 1);
        subject.accuracy(space, l, false)
    })?;

    let mut points = Vec::with_capacity(grid.len());
    for (level, &truth) in grid.points.iter().zip(&grid.truth) {
        let (mu, sigma) = run.predict(level)?;
        points.push(GridRecord {
            level: level.values.clone(),
            truth,
            pred: classification_rule(mu, sigma, h),
            mu,
            sigma,
        });
    }
    let pred: Vec<u8> = points.iter().map(|p| p.pred).collect();
    let score = f1_score(&grid.truth, &pred)?;

    let (assurance_set_size, synthetic_accepted) = match subject {
        Subject::Surface(_) => (None, None),
        Subject::Model {
            sample_set,
            synthetic_accepted,
            ..
        } => (Some(sample_set.len()), Some(*synthetic_accepted)),
    };
    Ok(AssuranceReport {
        config: cfg.clone(),
        threshold: h,
        dimensions: space.names(),
        precision: score.precision,
        recall: score.recall,
        f1: score.f1,
        true_positives: grid.positives(),
        predicted_positives: pred.iter().filter(|&&p| p == 1).count(),
        oracle_calls: calls.get(),
        assurance_set_size,
        synthetic_accepted,
        kernel: run.gp().map(|g| g.kernel().clone()),
        history: run.history().to_vec(),
        points,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(
            r#"{"source": {"kind": "surface", "name": "plateau"}, "threshold": 0.85}"#,
        )
        .unwrap();
        assert_eq!(cfg.budget, 400);
        assert_eq!(cfg.init_points, 20);
        assert_eq!(cfg.points_per_dim, 5);
        assert_eq!(cfg.space, SearchSpace::full());
        assert_eq!(cfg.threshold, Threshold::Absolute(0.85));
    }

    #[test]
    fn relative_threshold_parses() {
        let cfg = ExperimentConfig::from_json(
            r#"{"source": {"kind": "model", "model": "m.txt", "images": "i.idx", "labels": "l.idx"},
                "threshold": {"below_clean": 0.05},
                "few_shot": {"synthetic": {"images": "s-images.idx", "labels": "s-labels.idx"}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.threshold, Threshold::BelowClean { below_clean: 0.05 });
        let fs = cfg.few_shot.unwrap();
        assert_eq!(fs.per_class, 5);
        assert_eq!(fs.synthetic.unwrap().alpha, 0.8);
    }

    #[test]
    fn bad_config_is_config_error() {
        assert!(matches!(
            ExperimentConfig::from_json("{"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(
                r#"{"source": {"kind": "surface", "name": "nope"}, "threshold": 0.8}"#
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_model_file_names_path() {
        let cfg = ExperimentConfig::from_json(
            r#"{"source": {"kind": "model", "model": "/nonexistent/m.txt", "images": "i", "labels": "l"},
                "threshold": 0.5}"#,
        )
        .unwrap();
        match run_experiment(&cfg) {
            Err(Error::Config(msg)) => assert!(msg.contains("/nonexistent/m.txt")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_ignores_seed() {
        let mut a = ExperimentConfig::for_surface(BenchmarkSurface::Plateau, 0.85);
        let h = a.hash();
        a.seed = 7;
        assert_eq!(a.hash(), h);
        a.budget = 100;
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn synthetic_path_inference() {
        let (i, l) = synthetic_paths(Path::new("/tmp/x/gen-images.idx")).unwrap();
        assert_eq!(i, Path::new("/tmp/x/gen-images.idx"));
        assert_eq!(l, Path::new("/tmp/x/gen-labels.idx"));
        assert!(synthetic_paths(Path::new("/tmp/x/gen.idx")).is_err());
    }
}
