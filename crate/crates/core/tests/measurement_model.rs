use attikit::imu::{
    dead_reckon, default_gravity, generate_trajectory, measure, simulate, BiasSpec, Motion, NoiseSpec, SimulationSpec,
    TrajectorySpec,
};
use attikit::quat::{error_angle, EulerAngles, Quaternion};

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn noise_and_bias_statistics() {
    let spec = TrajectorySpec::new(
        Motion::Sinusoidal {
            axis: [0.0, 1.0, 0.0],
            amplitude: 0.4,
            frequency: 0.2,
        },
        999.99,
        100.0,
    );
    let truth = generate_trajectory(&spec).unwrap();
    assert_eq!(truth.len(), 100_000);
    let noise = NoiseSpec {
        gyro_std: 0.02,
        accel_std: 0.3,
        seed: Some(42),
    };
    let bias = BiasSpec {
        gyro: [0.01, -0.02, 0.005],
        accel: [0.1, 0.0, -0.05],
        ..Default::default()
    };
    let g = default_gravity();
    let samples = measure(&truth, &noise, &bias, g, 0).unwrap();
    let n = samples.len() as f64;
    for axis in 0..3 {
        let gyro_resid: Vec<f64> = samples
            .iter()
            .zip(&truth)
            .map(|(s, t)| s.gyro[axis] - (t.omega[axis] - bias.gyro[axis]))
            .collect();
        let (m, sd) = mean_std(&gyro_resid);
        assert!(m.abs() < 3.0 * 0.02 / n.sqrt(), "gyro mean {m}");
        assert!((sd / 0.02 - 1.0).abs() < 0.02, "gyro std {sd}");

        let accel_resid: Vec<f64> = samples
            .iter()
            .zip(&truth)
            .map(|(s, t)| s.accel[axis] - (t.q.inverse_rotate(g)[axis] + t.accel[axis] - bias.accel[axis]))
            .collect();
        let (m, sd) = mean_std(&accel_resid);
        assert!(m.abs() < 3.0 * 0.3 / n.sqrt(), "accel mean {m}");
        assert!((sd / 0.3 - 1.0).abs() < 0.02, "accel std {sd}");
    }
}

#[test]
fn random_walk_variance_grows_linearly() {
    let spec = TrajectorySpec::new(Motion::Static, 100.0, 100.0);
    let truth = generate_trajectory(&spec).unwrap();
    let bias = BiasSpec {
        gyro_walk_std: [0.01, 0.01, 0.01],
        ..Default::default()
    };
    // ensemble over seeds of the walk value after 100 s: variance σ²·t
    let finals: Vec<f64> = (0..400)
        .map(|seed| {
            let noise = NoiseSpec {
                gyro_std: 0.0,
                accel_std: 0.0,
                seed: Some(seed),
            };
            let s = measure(&truth, &noise, &bias, default_gravity(), 0).unwrap();
            s.last().unwrap().gyro.x
        })
        .collect();
    let (_, sd) = mean_std(&finals);
    let expected = 0.01 * 100f64.sqrt();
    assert!((sd / expected - 1.0).abs() < 0.15, "walk std {sd} vs {expected}");
}

#[test]
fn seeds_make_streams_reproducible() {
    let sim: SimulationSpec = serde_json::from_str(
        r#"{
            "name": "wobble",
            "trajectory": {"motion": {"kind": "constant-rate", "rate": [0.1, 0.2, 0.3]}, "duration": 5.0, "rate_hz": 100.0},
            "noise": {"gyro_std": 0.01, "accel_std": 0.1}
        }"#,
    )
    .unwrap();
    let a = simulate(&sim, 7).unwrap();
    let b = simulate(&sim, 7).unwrap();
    let c = simulate(&sim, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn dead_reckoning_tracks_every_clean_trajectory() {
    let motions = [
        Motion::Static,
        Motion::ConstantRate { rate: [0.4, -0.3, 1.1] },
        Motion::Sinusoidal {
            axis: [0.0, 0.6, 0.8],
            amplitude: 0.9,
            frequency: 0.5,
        },
    ];
    for motion in motions {
        let spec =
            TrajectorySpec::new(motion.clone(), 10.0, 100.0).with_initial(EulerAngles::from_degrees(5.0, 10.0, -20.0));
        let truth = generate_trajectory(&spec).unwrap();
        let samples = measure(
            &truth,
            &NoiseSpec::default(),
            &BiasSpec::default(),
            default_gravity(),
            0,
        )
        .unwrap();
        let est = dead_reckon(&samples, truth[0].q).unwrap();
        let worst = est
            .iter()
            .zip(&truth)
            .map(|(q, t)| error_angle(t.q, *q).unwrap())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{motion:?}: {worst}");
    }
}

#[test]
fn constant_bias_drift_follows_bias_times_time() {
    let spec = TrajectorySpec::new(Motion::Static, 10.0, 100.0);
    let truth = generate_trajectory(&spec).unwrap();
    let b = [0.003, -0.004, 0.012];
    let bias = BiasSpec {
        gyro: b,
        ..Default::default()
    };
    let samples = measure(&truth, &NoiseSpec::default(), &bias, default_gravity(), 0).unwrap();
    let est = dead_reckon(&samples, Quaternion::IDENTITY).unwrap();
    let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    for (q, s) in est.iter().zip(&samples).skip(100) {
        let expected = norm * s.t;
        let got = error_angle(Quaternion::IDENTITY, *q).unwrap();
        assert!((got / expected - 1.0).abs() < 0.01, "t = {}: {got} vs {expected}", s.t);
    }
}

#[test]
fn static_gravity_is_consistent() {
    for (r, p, y) in [(0.0, 0.0, 0.0), (30.0, -45.0, 120.0), (-80.0, 10.0, -170.0)] {
        let spec = TrajectorySpec::new(Motion::Static, 0.1, 100.0).with_initial(EulerAngles::from_degrees(r, p, y));
        let truth = generate_trajectory(&spec).unwrap();
        let samples = measure(
            &truth,
            &NoiseSpec::default(),
            &BiasSpec::default(),
            default_gravity(),
            0,
        )
        .unwrap();
        for (s, t) in samples.iter().zip(&truth) {
            assert!((s.accel.norm() - attikit::STANDARD_GRAVITY).abs() < 1e-9);
            assert!((t.q.rotate(s.accel) - default_gravity()).norm() < 1e-9);
        }
    }
}
