//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::time::{Duration, Instant};

use common::{blob, dense_predict, desk_fixture, model_config, random_problem, supersampled};
use maid_core::surfaces::SURFACES;
use maid_core::{
    apply_distortion, build_truth_grid, classification_rule, idx, run_baseline, run_experiment,
    run_experiment_on_grid, straddle_score, AssuranceSet, DistortionKind, DistortionParams,
    ExperimentConfig, GpPosterior, Image, SearchSpace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gp_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let p = random_problem(1000 + seed);
        assert!(p.inputs.len() <= 50 && p.inputs[0].len() <= 5);
        let gp = GpPosterior::fit(p.inputs.clone(), p.targets.clone(), p.kernel.clone())
            .map_err(|e| e.to_string())?;
        let shift = p.kernel.noise_variance + gp.jitter();
        for probe in &p.probes {
            let (mu, var) = gp.predict(probe).map_err(|e| e.to_string())?;
            let (mu_ref, var_ref) = dense_predict(&p.inputs, &p.targets, &p.kernel, shift, probe);
            worst = worst.max((mu - mu_ref).abs()).max((var - var_ref).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-8 && elapsed < Duration::from_secs(5),
        format!("max deviation {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn straddle_algebra() -> Outcome {
    let mut failures = Vec::new();
    if (straddle_score(0.85, 0.1, 0.85) - 0.196).abs() > 1e-15 {
        failures.push("mu = h case");
    }
    if (straddle_score(0.8, 0.1, 0.85) - 0.146).abs() > 1e-15 {
        failures.push("mu below h case");
    }
    if classification_rule(0.90, 0.01, 0.85) != 1 || classification_rule(0.90, 0.04, 0.85) != 0 {
        failures.push("classification cases");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let h: f64 = rng.random_range(0.0..1.0);
        let mu: f64 = rng.random_range(-1.0..2.0);
        let s1: f64 = rng.random_range(0.0..1.0);
        let s2: f64 = rng.random_range(0.0..1.0);
        if straddle_score(mu, s1, h) > straddle_score(h, s1, h) {
            failures.push("maximum away from mu = h");
            break;
        }
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        if straddle_score(mu, lo, h) > straddle_score(mu, hi, h) {
            failures.push("not monotone in sigma");
            break;
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "10,000 random draws".into()
        } else {
            failures.join(", ")
        },
    )
}

fn level_set_recovery(surface: maid_core::BenchmarkSurface) -> Outcome {
    let start = Instant::now();
    let base = ExperimentConfig::for_surface(surface, 0.85);
    let grid = build_truth_grid(&base).map_err(|e| e.to_string())?;
    if grid.len() != 3125 || base.budget != 400 {
        return Err(format!(
            "grid {} points, budget {}",
            grid.len(),
            base.budget
        ));
    }
    let (mut lse, mut rnd) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        let cfg = ExperimentConfig {
            seed,
            ..base.clone()
        };
        let report = run_experiment_on_grid(&cfg, &grid).map_err(|e| e.to_string())?;
        if report.history.len() != 400 {
            return Err(format!(
                "seed {seed}: {} observations",
                report.history.len()
            ));
        }
        lse.push(report.f1);
        rnd.push(run_baseline(&cfg, &grid).map_err(|e| e.to_string())?.f1);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&lse) - mean(&rnd);
    let elapsed = start.elapsed();
    check(
        mean(&lse) >= 0.9 && gap >= 0.1 && elapsed < Duration::from_secs(120),
        format!(
            "LSE F1 {:.3?} mean {:.3}, baseline {:.3?}, gap {gap:.3}, {:.0} s",
            lse,
            mean(&lse),
            rnd,
            elapsed.as_secs_f64()
        ),
    )
}

fn desk_digits() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = desk_fixture(dir.path(), 1000, 1000);
    if fx.clean_accuracy < 0.95 {
        return Err(format!("clean accuracy {:.3}", fx.clean_accuracy));
    }
    let base = model_config(&fx, r#"{"below_clean": 0.05}"#, "");
    let grid = build_truth_grid(&base).map_err(|e| e.to_string())?;
    let (mut lse, mut rnd) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        let cfg = ExperimentConfig {
            seed,
            ..base.clone()
        };
        lse.push(
            run_experiment_on_grid(&cfg, &grid)
                .map_err(|e| e.to_string())?
                .f1,
        );
        rnd.push(run_baseline(&cfg, &grid).map_err(|e| e.to_string())?.f1);
    }
    let gap = (lse.iter().sum::<f64>() - rnd.iter().sum::<f64>()) / 3.0;
    let elapsed = start.elapsed();
    check(
        gap >= 0.05 && elapsed < Duration::from_secs(15 * 60),
        format!(
            "clean {:.3}, h {:.3}, {} positives, LSE F1 {:.3?}, baseline {:.3?}, gap {gap:.3}, {:.0} s",
            fx.clean_accuracy,
            grid.threshold,
            grid.positives(),
            lse,
            rnd,
            elapsed.as_secs_f64()
        ),
    )
}

fn distortion_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let space = SearchSpace::full();
    for _ in 0..50 {
        let img = Image::new(
            28,
            28,
            (0..784).map(|_| rng.random_range(0.0..=1.0)).collect(),
        )
        .unwrap();
        let same = apply_distortion(&img, &DistortionParams::IDENTITY).unwrap();
        if same
            .pixels()
            .iter()
            .zip(img.pixels())
            .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            failures.push("identity not bit-exact".to_string());
            break;
        }
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..=1.0)).collect();
        let p = space.params(&space.denormalize(&u)).unwrap();
        let out = apply_distortion(&img, &p).unwrap();
        if out.width() != 28
            || out.height() != 28
            || out.pixels().iter().any(|v| !(0.0..=1.0).contains(v))
        {
            failures.push(format!("range violated at {p:?}"));
            break;
        }
    }
    let bright = DistortionParams::IDENTITY.with(DistortionKind::Brightness, 1.3);
    for (input, expected) in [(0.5, 0.65), (0.9, 1.0)] {
        let out = apply_distortion(&Image::filled(8, 8, input).unwrap(), &bright).unwrap();
        if out.pixels().iter().any(|&v| v != expected) {
            failures.push(format!("brightness 1.3 on {input}"));
        }
    }
    let img = blob(28);
    let mut worst = 0.0f64;
    for angle in [15.0, 30.0, 45.0, 60.0, 75.0, 90.0] {
        let p = DistortionParams::IDENTITY.with(DistortionKind::Rotation, angle);
        let got = apply_distortion(&img, &p).unwrap();
        let oracle = supersampled(&img, &p, 64);
        let err = got
            .pixels()
            .iter()
            .zip(oracle.pixels())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 784.0;
        worst = worst.max(err);
    }
    if worst >= 0.01 {
        failures.push(format!("rotation oracle mean error {worst:.4}"));
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("worst rotation mean error {worst:.4}")
        } else {
            failures.join(", ")
        },
    )
}

fn determinism() -> Outcome {
    let mut identical = true;
    for surface in SURFACES {
        let mut cfg = ExperimentConfig::for_surface(surface, 0.85);
        cfg.budget = 60;
        cfg.points_per_dim = 3;
        cfg.seed = 9;
        let a = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let b = run_experiment(&cfg).map_err(|e| e.to_string())?;
        identical &= a.without_timing().to_json() == b.without_timing().to_json();
    }
    check(
        identical,
        "surface reports byte-identical across repeated runs".into(),
    )
}

fn few_shot_plumbing() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = desk_fixture(dir.path(), 300, 300);
    let (si, sl) = (
        dir.path().join("synthetic-images.idx"),
        dir.path().join("synthetic-labels.idx"),
    );
    idx::write_set(
        &AssuranceSet::new(vec![], vec![]).unwrap(),
        &si,
        &sl,
        (28, 28),
    )
    .map_err(|e| e.to_string())?;
    let common = r#", "budget": 60, "points_per_dim": 3, "seed": 4"#;
    let plain = model_config(
        &fx,
        "0.6",
        &format!(r#"{common}, "few_shot": {{"per_class": 5}}"#),
    );
    let with_empty = model_config(
        &fx,
        "0.6",
        &format!(
            r#"{common}, "few_shot": {{"per_class": 5, "synthetic": {{"images": {si:?}, "labels": {sl:?}}}}}"#
        ),
    );
    let a = run_experiment(&plain).map_err(|e| e.to_string())?;
    let b = run_experiment(&with_empty).map_err(|e| e.to_string())?;
    let same = a.history == b.history
        && a.points == b.points
        && a.f1 == b.f1
        && a.kernel == b.kernel
        && a.assurance_set_size == Some(50)
        && b.assurance_set_size == Some(50)
        && b.synthetic_accepted == Some(0);
    check(
        same,
        format!(
            "sets {:?}/{:?}, F1 {:.3}/{:.3}, synthetic accepted {:?}",
            a.assurance_set_size, b.assurance_set_size, a.f1, b.f1, b.synthetic_accepted
        ),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(String, Outcome)> = vec![
        ("GP oracle equivalence".into(), gp_oracle()),
        ("Straddle algebra".into(), straddle_algebra()),
    ];
    for surface in SURFACES {
        results.push((
            format!("Level-set recovery ({surface})"),
            level_set_recovery(surface),
        ));
    }
    results.push(("Desk digits directional check".into(), desk_digits()));
    results.push(("Distortion engine suite".into(), distortion_suite()));
    results.push(("Determinism".into(), determinism()));
    results.push((
        "Few-shot plumbing with an empty synthetic set".into(),
        few_shot_plumbing(),
    ));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
