//! Model assurance under image distortion.
//!
//! Given a classifier and a box of image distortions (rotation, scale,
//! translation, brightness), this crate actively learns which distortion
//! levels keep the classifier's accuracy at or above a threshold `h`. A
//! Gaussian-process surrogate of the accuracy surface is sampled with the
//! Straddle acquisition and the final labels use the conservative rule
//! `mu - 2 sigma >= h`.
//!
//! The main entry points are [`run_lse`] for the sampling loop and
//! [`run_experiment`] for a full config-driven run with ground-truth scoring.

pub mod dataset;
pub mod digits;
pub mod distortion;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod grid;
pub mod idx;
pub mod lse;
pub mod model;
pub mod report;
pub mod surfaces;
pub mod train;

pub use dataset::AssuranceSet;
pub use distortion::{apply_distortion, distort_set, DistortionKind, DistortionParams, Image};
pub use error::{Error, Result};
pub use experiment::{
    build_truth_grid, ingest_synthetic, run_baseline, run_experiment, run_experiment_on_grid,
    ExperimentConfig, Source, Threshold,
};
pub use gp::{fit_hyperparameters, kernel_eval, GpPosterior, KernelParams};
pub use grid::{build_grid, f1_score, EvaluationGrid, F1Score, RandomBaseline};
pub use lse::{
    classification_rule, run_lse, straddle_score, AssuranceRun, AssuranceRunConfig,
    DistortionLevel, Observation, SearchSpace,
};
pub use model::{evaluate_accuracy, Model};
pub use report::{AssuranceReport, GridRecord, ReportFormat};
pub use surfaces::{benchmark_surface, BenchmarkSurface};
pub use train::{train_model, train_on_set, TrainConfig};
