use std::fs;
use std::time::Instant;

use attikit::dataset::{save_trial, sidecar_path, Manifest, ManifestEntry, TrialFile, TrialMeta};
use attikit::eval::{
    boxplot_stats, evaluate, render_boxplots, render_report, EchoEstimator, Estimator, EstimatorRef, ReportFormat,
    RowStatus,
};
use attikit::imu::{simulate, BiasSpec, Motion, NoiseSpec, SimulationSpec, TrajectorySpec};
use attikit::nn::{ModelKind, WeightStore};
use attikit::{EulerAngles, Quaternion, WindowSpec};

fn sim_trial(name: &str, motion: Motion, seed: u64) -> TrialFile {
    let spec = SimulationSpec {
        name: name.into(),
        trajectory: TrajectorySpec::new(motion, 6.0, 100.0).with_initial(EulerAngles::new(0.2, -0.1, 0.3)),
        noise: NoiseSpec {
            gyro_std: 0.01,
            accel_std: 0.05,
            seed: Some(seed),
        },
        bias: BiasSpec::default(),
        gravity: None,
    };
    let meta = TrialMeta {
        name: name.into(),
        rate_hz: 100.0,
        source: "sim".into(),
    };
    TrialFile::new(meta, simulate(&spec, 0).unwrap()).unwrap()
}

fn fixture_trials() -> Vec<TrialFile> {
    vec![
        sim_trial("still", Motion::Static, 1),
        sim_trial("spin", Motion::ConstantRate { rate: [0.0, 0.0, 0.4] }, 2),
        sim_trial(
            "rock",
            Motion::Sinusoidal {
                axis: [1.0, 0.0, 0.0],
                amplitude: 0.4,
                frequency: 0.5,
            },
            3,
        ),
    ]
}

#[test]
fn manifest_round_trip_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let trials = fixture_trials();
    let mut entries = Vec::new();
    for t in &trials {
        let csv = dir.path().join(format!("{}.csv", t.meta.name));
        save_trial(t, &csv).unwrap();
        assert!(sidecar_path(&csv).exists());
        entries.push(ManifestEntry {
            path: format!("{}.csv", t.meta.name).into(),
            meta_path: None,
        });
    }
    let manifest_path = dir.path().join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string(&Manifest { trials: entries }).unwrap(),
    )
    .unwrap();
    let loaded = Manifest::load(&manifest_path).unwrap().load_trials().unwrap();
    assert_eq!(loaded, trials);

    let window = WindowSpec::default();
    let refs: Vec<EstimatorRef> = ["dead-reckon", "cf", "madgwick", "mahony", "ekf"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let built: Vec<Box<dyn Estimator>> = refs.iter().map(|r| r.build(&[], window).unwrap()).collect();
    let echo = EchoEstimator::new("Echo", Quaternion::IDENTITY);
    let mut all: Vec<&dyn Estimator> = built.iter().map(|b| b.as_ref()).collect();
    all.push(&echo);
    let report = evaluate(&loaded, &all, window).unwrap();
    assert!(!report.has_failures());
    assert_eq!(report.rows.len(), 3 * 6);
    for row in &report.rows {
        assert_eq!(row.status, RowStatus::Ok);
    }
    assert_eq!(
        report.estimators,
        ["Dead Reckoning", "CF", "Madgwick", "Mahony", "EKF", "Echo"]
    );
    for trial in ["still", "spin", "rock"] {
        let echo = report.row(trial, "Echo").unwrap().stats.unwrap();
        assert!(echo.max_deg < 1e-9);
        for f in ["CF", "Madgwick", "Mahony", "EKF"] {
            assert!(report.row(trial, f).unwrap().stats.unwrap().rmse_deg.is_finite());
        }
    }
    let md = render_report(&report, ReportFormat::Markdown);
    assert!(md.lines().last().unwrap().starts_with("| Average All |"));
    assert!(md.lines().last().unwrap().ends_with("| 0.00 |"));

    let again = evaluate(&loaded, &all, window).unwrap();
    for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
        assert_eq!(render_report(&report, format), render_report(&again, format));
    }
    assert_eq!(render_boxplots(&report), render_boxplots(&again));
}

#[test]
fn boxplot_of_one_to_nine() {
    let values: Vec<f64> = (1..=9).map(f64::from).collect();
    let b = boxplot_stats(&values).unwrap();
    assert_eq!(
        (b.median, b.q1, b.q3, b.whisker_lo, b.whisker_hi, b.outlier_count),
        (5.0, 3.0, 7.0, 1.0, 9.0, 0)
    );
}

#[test]
fn model_rows_score_windows_and_bad_weights_fail_alone() {
    let trials = fixture_trials();
    let window = WindowSpec::new(40, 20).unwrap();
    let graph = ModelKind::B.build(40).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    WeightStore::init(&graph, 7).save(&good).unwrap();
    let spec: EstimatorRef = format!("model-b:weights={}", good.display()).parse().unwrap();
    let model = spec.build(&[], window).unwrap();
    let started = Instant::now();
    let report = evaluate(&trials, &[model.as_ref()], window).unwrap();
    println!("model-b rows in {:.2}s", started.elapsed().as_secs_f64());
    let row = report.row("still", "Model B").unwrap();
    assert_eq!(row.status, RowStatus::Ok);
    assert_eq!(row.stats.unwrap().n_estimates, 29);

    let mut short = trials[0].clone();
    short.meta.name = "short".into();
    short.samples.truncate(30);
    let cf = "cf".parse::<EstimatorRef>().unwrap().build(&[], window).unwrap();
    let report = evaluate(&[short, trials[1].clone()], &[model.as_ref(), cf.as_ref()], window).unwrap();
    assert!(report.has_failures());
    assert!(matches!(
        report.row("short", "Model B").unwrap().status,
        RowStatus::Failed(_)
    ));
    assert_eq!(report.row("short", "CF").unwrap().status, RowStatus::Ok);
    assert_eq!(report.row("spin", "Model B").unwrap().status, RowStatus::Ok);

    let mut missing = WeightStore::init(&graph, 7);
    let mut kept = WeightStore::new();
    for (name, t) in missing.iter().filter(|(n, _)| *n != "head/bias") {
        kept.insert(name, t.clone());
    }
    missing = kept;
    let bad = dir.path().join("bad.json");
    missing.save(&bad).unwrap();
    let wrong: EstimatorRef = format!("model-b:weights={}", bad.display()).parse().unwrap();
    let err = wrong.build(&[], window).err().unwrap();
    assert!(err.to_string().contains("head/bias"), "{err}");
}
