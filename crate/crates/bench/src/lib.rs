//! Shared inputs for the benchmarks in `benches/`.

use attikit::dataset::{extract_windows, TrialFile, TrialMeta, Window, WindowSpec};
use attikit::imu::{simulate, BiasSpec, Motion, NoiseSpec, SimulationSpec, TrajectorySpec};
use attikit::loss::LossBatch;
use attikit::{ImuSample, Quaternion, Vec3};

/// Deterministic pseudo-random unit quaternion pairs.
pub fn quaternion_pairs(n: usize) -> LossBatch {
    let unit =
        |k: f64| Quaternion::from_rotation_vector(Vec3::new((k * 0.37).sin(), (k * 0.91).cos(), (k * 1.7).sin()) * 2.5);
    let pairs = (0..n).map(|i| (unit(i as f64), unit(i as f64 + 0.5))).collect();
    LossBatch::new(pairs).expect("non-empty batch")
}

/// A noisy sinusoidal-motion trial of `seconds` at 100 Hz.
pub fn rocking_trial(seconds: f64) -> Vec<ImuSample> {
    let spec = SimulationSpec {
        name: "bench".into(),
        trajectory: TrajectorySpec::new(
            Motion::Sinusoidal {
                axis: [1.0, 0.5, 0.2],
                amplitude: 0.6,
                frequency: 0.3,
            },
            seconds,
            100.0,
        ),
        noise: NoiseSpec {
            gyro_std: 0.01,
            accel_std: 0.1,
            seed: Some(1),
        },
        bias: BiasSpec::default(),
        gravity: None,
    };
    simulate(&spec, 0).expect("valid spec")
}

/// The first window of length `len` cut from a rocking trial.
pub fn window(len: usize) -> Window {
    let meta = TrialMeta {
        name: "bench".into(),
        rate_hz: 100.0,
        source: "simulated".into(),
    };
    let trial = TrialFile::new(meta, rocking_trial(len as f64 / 100.0 + 0.01)).expect("valid trial");
    let spec = WindowSpec::new(len, len).expect("valid window");
    extract_windows(&trial, spec).expect("trial long enough").remove(0)
}
