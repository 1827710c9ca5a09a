//! `maid`: train a desk classifier, build ground-truth grids, run level-set
//! assurance and inspect reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maid_core::experiment::{
    synthetic_paths, FewShot, SyntheticInput, DEFAULT_ALPHA, DEFAULT_FEW_SHOT_PER_CLASS,
};
use maid_core::surfaces::BenchmarkSurface;
use maid_core::{
    build_truth_grid, digits, evaluate_accuracy, idx, run_experiment, train_on_set,
    AssuranceReport, DistortionParams, Error, ExperimentConfig, ReportFormat, Result, Source,
    Threshold,
};

#[derive(Parser)]
#[command(
    name = "maid",
    version,
    about = "Model assurance under image distortion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the MLP classifier and write it with its assurance set.
    TrainModel(TrainArgs),
    /// Evaluate the ground-truth grid and write it as CSV.
    BuildGrid(RunArgs),
    /// Run level-set estimation and persist the scored report.
    RunAssure(AssureArgs),
    /// Print a stored report.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training images (IDX); generated procedurally when omitted.
    #[arg(long, requires = "train_labels")]
    train_images: Option<PathBuf>,
    #[arg(long, requires = "train_images")]
    train_labels: Option<PathBuf>,
    /// Assurance images (IDX); generated procedurally when omitted.
    #[arg(long, requires = "assurance_labels")]
    assurance_images: Option<PathBuf>,
    #[arg(long, requires = "assurance_images")]
    assurance_labels: Option<PathBuf>,
    /// Size of each generated set.
    #[arg(long, default_value_t = 1000)]
    desk_size: usize,
    /// Seed for the generated corpus and for training.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "surface")]
    config: Option<PathBuf>,
    /// Analytic benchmark surface to use instead of a config.
    #[arg(long)]
    surface: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    /// Absolute accuracy threshold.
    #[arg(long, conflicts_with = "below_clean")]
    threshold: Option<f64>,
    /// Threshold as clean accuracy minus this margin.
    #[arg(long)]
    below_clean: Option<f64>,
    #[arg(long)]
    points_per_dim: Option<usize>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct AssureArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sample the oracle on a few images per class.
    #[arg(long)]
    few_shot: bool,
    #[arg(long, default_value_t = DEFAULT_FEW_SHOT_PER_CLASS)]
    per_class: usize,
    /// Synthetic IDX images (or a directory holding them) to add to the
    /// few-shot set.
    #[arg(long, requires = "few_shot")]
    synthetic: Option<PathBuf>,
    /// Confidence cutoff for synthetic images.
    #[arg(long, default_value_t = DEFAULT_ALPHA, requires = "synthetic")]
    alpha: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// A run directory or a report.json file.
    path: PathBuf,
    /// Print the full report as json or csv instead of a summary.
    #[arg(long)]
    format: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainModel(a) => train_model(a),
        Command::BuildGrid(a) => build_grid(a),
        Command::RunAssure(a) => run_assure(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("maid: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn train_model(a: TrainArgs) -> Result<()> {
    let generated = digits::desk_corpus(a.desk_size, a.desk_size, a.seed)?;
    let train = match (&a.train_images, &a.train_labels) {
        (Some(i), Some(l)) => idx::read_set(i, l)?,
        _ => generated.0,
    };
    let assurance = match (&a.assurance_images, &a.assurance_labels) {
        (Some(i), Some(l)) => idx::read_set(i, l)?,
        _ => generated.1,
    };
    let cfg = maid_core::train::TrainConfig {
        hidden_dim: a.hidden,
        epochs: a.epochs,
        seed: a.seed,
        ..Default::default()
    };
    let model = train_on_set(&train, &cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    model.export(&a.out.join("model.txt"))?;
    let dims = assurance
        .images()
        .first()
        .map_or((digits::SIDE, digits::SIDE), |img| {
            (img.height(), img.width())
        });
    idx::write_set(
        &assurance,
        &a.out.join("assurance-images.idx"),
        &a.out.join("assurance-labels.idx"),
        dims,
    )?;
    let clean = evaluate_accuracy(&model, &assurance, &DistortionParams::IDENTITY)?;
    println!(
        "wrote {} (clean accuracy {clean:.4})",
        a.out.join("model.txt").display()
    );
    Ok(())
}

/// The config from `--config` or `--surface`, with flag overrides applied.
fn experiment_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, &a.surface) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => {
            let surface =
                BenchmarkSurface::from_name(name).map_err(|e| Error::Config(e.to_string()))?;
            ExperimentConfig::for_surface(surface, 0.85)
        }
        (None, None) => return Err(Error::Config("pass --config or --surface".into())),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(budget) = a.budget {
        cfg.budget = budget;
    }
    if let Some(h) = a.threshold {
        cfg.threshold = Threshold::Absolute(h);
    }
    if let Some(m) = a.below_clean {
        cfg.threshold = Threshold::BelowClean { below_clean: m };
    }
    if let Some(n) = a.points_per_dim {
        cfg.points_per_dim = n;
    }
    Ok(cfg)
}

fn build_grid(a: RunArgs) -> Result<()> {
    let cfg = experiment_config(&a)?;
    let grid = build_truth_grid(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let path = a.out.join(format!("grid-{}.csv", cfg.hash()));
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    let mut header = cfg.space.names();
    header.extend(["accuracy", "truth"].map(String::from));
    w.write_record(&header).map_err(|e| csv_error(&path, e))?;
    for ((p, acc), t) in grid.points.iter().zip(&grid.accuracies).zip(&grid.truth) {
        let mut row: Vec<String> = p.values.iter().map(f64::to_string).collect();
        row.push(acc.to_string());
        row.push(t.to_string());
        w.write_record(&row).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    println!(
        "{}: {} points, {} at or above h = {:.4}",
        path.display(),
        grid.len(),
        grid.positives(),
        grid.threshold
    );
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

fn run_assure(a: AssureArgs) -> Result<()> {
    let mut cfg = experiment_config(&a.run)?;
    if a.few_shot {
        let synthetic = match &a.synthetic {
            Some(path) => {
                let (images, labels) = synthetic_paths(path)?;
                Some(SyntheticInput {
                    images,
                    labels,
                    alpha: a.alpha,
                })
            }
            None => None,
        };
        cfg.few_shot = Some(FewShot {
            per_class: a.per_class,
            synthetic,
        });
    }
    if matches!(cfg.source, Source::Surface { .. }) && cfg.few_shot.is_some() {
        return Err(Error::Config("--few-shot needs a model source".into()));
    }
    let report = run_experiment(&cfg)?;
    let dir = report.persist(&a.run.out)?;
    println!("{}", summary(&report));
    println!("report written to {}", dir.display());
    Ok(())
}

fn summary(r: &AssuranceReport) -> String {
    let mut s = format!(
        "h = {:.4}  F1 {:.4}  precision {:.4}  recall {:.4}  ({} of {} grid points predicted usable)\n\
         oracle calls {}  observations {}  {:.1} s",
        r.threshold,
        r.f1,
        r.precision,
        r.recall,
        r.predicted_positives,
        r.points.len(),
        r.oracle_calls,
        r.history.len(),
        r.wall_clock_seconds
    );
    if let Some(n) = r.assurance_set_size {
        s.push_str(&format!("\nsampling set {n} images"));
        if let Some(k) = r.synthetic_accepted {
            s.push_str(&format!(", {k} synthetic"));
        }
    }
    s
}

fn report(a: ReportArgs) -> Result<()> {
    let path = if a.path.is_dir() {
        a.path.join("report.json")
    } else {
        a.path.clone()
    };
    if !path.is_file() {
        return Err(Error::Config(format!("no report at {}", path.display())));
    }
    let r = AssuranceReport::read_json(&path)?;
    match a
        .format
        .as_deref()
        .map(str::parse::<ReportFormat>)
        .transpose()?
    {
        None => println!("{}", summary(&r)),
        Some(ReportFormat::Json) => println!("{}", r.to_json()),
        Some(ReportFormat::Csv) => print!("{}", r.to_csv()?),
    }
    Ok(())
}
