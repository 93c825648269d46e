use attikit::filters::{run, AttitudeFilter, FilterConfig, FilterKind};
use attikit::imu::{
    dead_reckon, default_gravity, generate_trajectory, measure, BiasSpec, Motion, NoiseSpec, TrajectorySpec,
};
use attikit::quat::{error_angle, error_quat, heading_inclination_errors, rmse_angle, EulerAngles, Quaternion};
use attikit::ImuSample;

fn clean(spec: &TrajectorySpec) -> (Vec<Quaternion>, Vec<ImuSample>) {
    let truth = generate_trajectory(spec).unwrap();
    let samples = measure(
        &truth,
        &NoiseSpec::default(),
        &BiasSpec::default(),
        default_gravity(),
        0,
    )
    .unwrap();
    (truth.iter().map(|s| s.q).collect(), samples)
}

#[test]
fn static_poses_settle_below_a_tenth_of_a_degree() {
    for roll in [-60.0, -25.0, 0.0, 40.0, 60.0] {
        for pitch in [-60.0, 0.0, 35.0, 60.0] {
            let spec = TrajectorySpec::new(Motion::Static, 10.0, 100.0)
                .with_initial(EulerAngles::from_degrees(roll, pitch, 0.0));
            let (truth, samples) = clean(&spec);
            for kind in FilterKind::ALL {
                let est = run(&FilterConfig::new(kind), &samples).unwrap();
                let e = est.last().unwrap().to_euler().unwrap();
                let t = truth.last().unwrap().to_euler().unwrap();
                let worst = (e.roll - t.roll).abs().max((e.pitch - t.pitch).abs()).to_degrees();
                assert!(worst < 0.1, "{kind} at ({roll}, {pitch}): {worst}°");
            }
        }
    }
}

#[test]
fn tilted_start_from_identity_converges_within_five_seconds() {
    let spec = TrajectorySpec::new(Motion::Static, 5.0, 100.0).with_initial(EulerAngles::from_degrees(30.0, 0.0, 0.0));
    let (_, samples) = clean(&spec);
    for kind in FilterKind::ALL {
        let mut f = AttitudeFilter::new(FilterConfig::new(kind), Quaternion::IDENTITY).unwrap();
        let mut q = Quaternion::IDENTITY;
        for s in &samples {
            q = f.update(s).unwrap();
        }
        let err = (q.to_euler().unwrap().roll.to_degrees() - 30.0).abs();
        assert!(err < 0.5, "{kind}: {err}°");
    }
}

#[test]
fn yaw_drifts_while_tilt_stays_bounded() {
    // truth yaws at a constant rate; a gyro bias about z is invisible to gravity
    let spec = TrajectorySpec::new(Motion::ConstantRate { rate: [0.0, 0.0, 0.3] }, 20.0, 100.0)
        .with_initial(EulerAngles::from_degrees(10.0, -5.0, 0.0));
    let truth = generate_trajectory(&spec).unwrap();
    let bias = BiasSpec {
        gyro: [0.0, 0.0, 0.02],
        ..Default::default()
    };
    let samples = measure(&truth, &NoiseSpec::default(), &bias, default_gravity(), 0).unwrap();
    for kind in FilterKind::ALL {
        let est = run(&FilterConfig::new(kind), &samples).unwrap();
        let mut max_incl: f64 = 0.0;
        let mut heading = Vec::new();
        for (q, t) in est.iter().zip(&truth) {
            let (h, i) = heading_inclination_errors(error_quat(t.q, *q).unwrap());
            max_incl = max_incl.max(i);
            heading.push(h.abs());
        }
        assert!(
            max_incl.to_degrees() < 2.0,
            "{kind}: tilt error {}°",
            max_incl.to_degrees()
        );
        let early = heading[200];
        let late = *heading.last().unwrap();
        assert!(late > early + 0.2, "{kind}: heading error {early} -> {late}");
    }
}

#[test]
fn noisy_fixture_beats_dead_reckoning() {
    let spec = TrajectorySpec::new(Motion::Static, 60.0, 100.0);
    let truth = generate_trajectory(&spec).unwrap();
    let noise = NoiseSpec {
        gyro_std: 0.02,
        accel_std: 0.3,
        seed: Some(0),
    };
    let bias = BiasSpec {
        gyro: [0.01, 0.0, 0.0],
        ..Default::default()
    };
    let samples = measure(&truth, &noise, &bias, default_gravity(), 0).unwrap();
    let rmse = |est: &[Quaternion]| {
        let e: Vec<f64> = est
            .iter()
            .zip(&truth)
            .map(|(q, t)| error_angle(t.q, *q).unwrap())
            .collect();
        rmse_angle(&e).unwrap()
    };
    let dr = rmse(&dead_reckon(&samples, truth[0].q).unwrap());
    for kind in FilterKind::ALL {
        let f = rmse(&run(&FilterConfig::new(kind), &samples).unwrap());
        assert!(f < dr, "{kind}: {f} vs dead reckoning {dr}");
    }
}

#[test]
fn outputs_stay_unit_and_runs_repeat() {
    let spec = TrajectorySpec::new(
        Motion::Sinusoidal {
            axis: [0.6, 0.0, 0.8],
            amplitude: 0.7,
            frequency: 0.4,
        },
        8.0,
        200.0,
    );
    let truth = generate_trajectory(&spec).unwrap();
    let noise = NoiseSpec {
        gyro_std: 0.05,
        accel_std: 0.5,
        seed: Some(11),
    };
    let samples = measure(&truth, &noise, &BiasSpec::default(), default_gravity(), 0).unwrap();
    for kind in FilterKind::ALL {
        let a = run(&FilterConfig::new(kind), &samples).unwrap();
        let b = run(&FilterConfig::new(kind), &samples).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), samples.len());
        assert!(a.iter().all(|q| (q.norm() - 1.0).abs() <= 1e-9), "{kind}");
    }
}
