//! Synthetic trajectories, the IMU measurement model and gyro dead reckoning.
//!
//! Measurements follow
//!
//! ```text
//! ω̃ = ω − b_ω + v_ω,          v_ω ~ N(0, σ_ω²)
//! ã = Rᵀ g + a − b_a + v_a,    v_a ~ N(0, σ_a²)
//! ```
//!
//! with `R` the body-to-world rotation of the true attitude and the world
//! gravity vector `g = [0, 0, +9.80665]` by default, so a level sensor at
//! rest reads `ã = [0, 0, +9.80665]`.
//!
//! Noise is drawn from a ChaCha8 generator seeded with [`NoiseSpec::seed`].
//! Every sample consumes exactly twelve standard normals, in order: gyro
//! noise x/y/z, accel noise x/y/z, gyro bias walk x/y/z, accel bias walk
//! x/y/z. Fixtures generated from the same spec and seed are bit-identical.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{EulerAngles, Quaternion, Vec3};
use crate::STANDARD_GRAVITY;

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Gyro white-noise standard deviation, rad/s.
    #[serde(default)]
    pub gyro_std: f64,
    /// Accelerometer white-noise standard deviation, m/s².
    #[serde(default)]
    pub accel_std: f64,
    /// RNG seed; `None` means the caller-supplied default.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    /// Constant gyro bias, rad/s.
    #[serde(default)]
    pub gyro: [f64; 3],
    /// Constant accelerometer bias, m/s².
    #[serde(default)]
    pub accel: [f64; 3],
    /// Gyro bias random-walk density, rad/s/√s (0 disables).
    #[serde(default)]
    pub gyro_walk_std: [f64; 3],
    /// Accelerometer bias random-walk density, m/s²/√s (0 disables).
    #[serde(default)]
    pub accel_walk_std: [f64; 3],
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        if !(self.gyro_std >= 0.0 && self.accel_std >= 0.0) {
            return Err(Error::invalid("noise standard deviations must be >= 0"));
        }
        Ok(())
    }
}

impl BiasSpec {
    fn validate(&self) -> Result<()> {
        let finite = self.gyro.iter().chain(&self.accel).all(|v| v.is_finite());
        let walks_ok = self.gyro_walk_std.iter().chain(&self.accel_walk_std).all(|v| *v >= 0.0);
        if !finite || !walks_ok {
            return Err(Error::invalid("bias must be finite and random-walk stds >= 0"));
        }
        Ok(())
    }
}

/// Rotational motion primitive; all kinds are integrated in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Motion {
    Static,
    /// Constant body rate, rad/s.
    ConstantRate {
        rate: [f64; 3],
    },
    /// Rotation about a fixed body axis by `amplitude·sin(2π·frequency·t)`.
    Sinusoidal {
        axis: [f64; 3],
        amplitude: f64,
        frequency: f64,
    },
    /// Segments applied back to back, each starting where the previous one
    /// ended. After the last segment the attitude is held.
    Composite {
        segments: Vec<Segment>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub motion: Motion,
}

/// World-frame sinusoidal translation acceleration, m/s².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearAccel {
    pub amplitude: [f64; 3],
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub motion: Motion,
    /// Seconds.
    pub duration: f64,
    /// Samples per second.
    pub rate_hz: f64,
    /// Initial roll/pitch/yaw in degrees.
    #[serde(default)]
    pub initial_euler_deg: [f64; 3],
    #[serde(default)]
    pub linear_accel: Option<LinearAccel>,
}

impl TrajectorySpec {
    pub fn new(motion: Motion, duration: f64, rate_hz: f64) -> Self {
        TrajectorySpec {
            motion,
            duration,
            rate_hz,
            initial_euler_deg: [0.0; 3],
            linear_accel: None,
        }
    }

    pub fn with_initial(mut self, euler: EulerAngles) -> Self {
        self.initial_euler_deg = [
            euler.roll.to_degrees(),
            euler.pitch.to_degrees(),
            euler.yaw.to_degrees(),
        ];
        self
    }

    pub fn initial_orientation(&self) -> Quaternion {
        let [r, p, y] = self.initial_euler_deg;
        Quaternion::from_euler(EulerAngles::from_degrees(r, p, y))
    }

    /// Number of samples, including both `t = 0` and `t = duration`.
    pub fn sample_count(&self) -> usize {
        (self.duration * self.rate_hz).round() as usize + 1
    }
}

/// One ground-truth instant of a generated trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub q: Quaternion,
    /// Body angular rate, rad/s.
    pub omega: Vec3,
    /// Body-frame linear acceleration, m/s².
    pub accel: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// rad/s
    pub gyro: Vec3,
    /// m/s²
    pub accel: Vec3,
    pub gt: Option<Quaternion>,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vec3, accel: Vec3) -> Self {
        ImuSample {
            t,
            gyro,
            accel,
            gt: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.gyro.iter().chain(self.accel.iter()).all(|v| v.is_finite())
            && self.gt.is_none_or(|q| q.is_finite())
    }
}

fn unit_axis(axis: [f64; 3]) -> Result<Vec3> {
    let v = Vec3::from(axis);
    let n = v.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid("sinusoidal motion needs a non-zero axis"));
    }
    Ok(v / n)
}

/// Attitude and body rate `tau` seconds into a primitive starting at `start`.
fn primitive_state(motion: &Motion, start: Quaternion, tau: f64) -> Result<(Quaternion, Vec3)> {
    match motion {
        Motion::Static => Ok((start, Vec3::zeros())),
        Motion::ConstantRate { rate } => {
            let w = Vec3::from(*rate);
            Ok((start * Quaternion::from_rotation_vector(w * tau), w))
        }
        Motion::Sinusoidal {
            axis,
            amplitude,
            frequency,
        } => {
            let u = unit_axis(*axis)?;
            let phase = 2.0 * PI * frequency * tau;
            let angle = amplitude * phase.sin();
            let rate = amplitude * 2.0 * PI * frequency * phase.cos();
            Ok((start * Quaternion::from_axis_angle(u, angle)?, u * rate))
        }
        Motion::Composite { .. } => Err(Error::Unknown {
            what: "motion kind",
            name: "nested composite".into(),
        }),
    }
}

fn motion_state(motion: &Motion, start: Quaternion, t: f64) -> Result<(Quaternion, Vec3)> {
    let Motion::Composite { segments } = motion else {
        return primitive_state(motion, start, t);
    };
    let mut seg_start = start;
    let mut t0 = 0.0;
    for seg in segments {
        if !(seg.duration > 0.0) {
            return Err(Error::invalid("composite segment durations must be > 0"));
        }
        if t < t0 + seg.duration {
            return primitive_state(&seg.motion, seg_start, t - t0);
        }
        seg_start = primitive_state(&seg.motion, seg_start, seg.duration)?.0;
        t0 += seg.duration;
    }
    Ok((seg_start, Vec3::zeros()))
}

/// Samples a trajectory at `rate_hz`, integrating attitude in closed form.
pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Vec<TruthSample>> {
    if !(spec.duration > 0.0 && spec.rate_hz > 0.0) {
        return Err(Error::invalid("trajectory duration and rate must be > 0"));
    }
    let q0 = spec.initial_orientation();
    (0..spec.sample_count())
        .map(|k| {
            let t = k as f64 / spec.rate_hz;
            let (q, omega) = motion_state(&spec.motion, q0, t)?;
            let accel = match &spec.linear_accel {
                Some(la) => {
                    let world = Vec3::from(la.amplitude) * (2.0 * PI * la.frequency * t).sin();
                    q.inverse_rotate(world)
                }
                None => Vec3::zeros(),
            };
            Ok(TruthSample { t, q, omega, accel })
        })
        .collect()
}

pub fn default_gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, STANDARD_GRAVITY)
}

/// Applies the measurement model to a truth stream. `default_seed` is used
/// when the noise spec carries no seed.
pub fn measure(
    truth: &[TruthSample],
    noise: &NoiseSpec,
    bias: &BiasSpec,
    gravity: Vec3,
    default_seed: u64,
) -> Result<Vec<ImuSample>> {
    noise.validate()?;
    bias.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed.unwrap_or(default_seed));
    let normal3 = |rng: &mut ChaCha8Rng| -> Vec3 {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        Vec3::from(v)
    };
    let mut b_gyro = Vec3::from(bias.gyro);
    let mut b_accel = Vec3::from(bias.accel);
    let walk_gyro = Vec3::from(bias.gyro_walk_std);
    let walk_accel = Vec3::from(bias.accel_walk_std);
    let mut out = Vec::with_capacity(truth.len());
    let mut prev_t: Option<f64> = None;
    for s in truth {
        let v_gyro = normal3(&mut rng) * noise.gyro_std;
        let v_accel = normal3(&mut rng) * noise.accel_std;
        let n_gyro_walk = normal3(&mut rng);
        let n_accel_walk = normal3(&mut rng);
        if let Some(pt) = prev_t {
            let sq = (s.t - pt).max(0.0).sqrt();
            b_gyro += n_gyro_walk.component_mul(&walk_gyro) * sq;
            b_accel += n_accel_walk.component_mul(&walk_accel) * sq;
        }
        prev_t = Some(s.t);
        let gyro = s.omega - b_gyro + v_gyro;
        let accel = s.q.inverse_rotate(gravity) + s.accel - b_accel + v_accel;
        out.push(ImuSample {
            t: s.t,
            gyro,
            accel,
            gt: Some(s.q),
        });
    }
    Ok(out)
}

/// Everything needed to regenerate a synthetic trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub name: String,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub bias: BiasSpec,
    /// Gravity magnitude along world +z; defaults to standard gravity.
    #[serde(default)]
    pub gravity: Option<f64>,
}

pub fn simulate(spec: &SimulationSpec, default_seed: u64) -> Result<Vec<ImuSample>> {
    let truth = generate_trajectory(&spec.trajectory)?;
    let g = Vec3::new(0.0, 0.0, spec.gravity.unwrap_or(STANDARD_GRAVITY));
    measure(&truth, &spec.noise, &spec.bias, g, default_seed)
}

/// One attitude propagation step over `dt` seconds using the exponential
/// map of the trapezoidal mean rate `(prev + curr)/2`.
pub fn propagate(q: Quaternion, prev_rate: Vec3, rate: Vec3, dt: f64) -> Quaternion {
    let mean = (prev_rate + rate) * 0.5;
    let next = q * Quaternion::from_rotation_vector(mean * dt);
    next.normalize().unwrap_or(q)
}

/// Gyro-only attitude integration, one output per input sample.
pub fn dead_reckon(samples: &[ImuSample], q0: Quaternion) -> Result<Vec<Quaternion>> {
    let first = samples.first().ok_or(Error::EmptyInput("dead_reckon samples"))?;
    let mut q = q0.normalize()?;
    let mut out = Vec::with_capacity(samples.len());
    out.push(q);
    let mut prev = first;
    for (i, s) in samples.iter().enumerate().skip(1) {
        let dt = s.t - prev.t;
        if !(dt > 0.0) {
            return Err(Error::AtSample {
                index: i,
                source: Box::new(Error::invalid(format!(
                    "timestamps must increase ({} -> {})",
                    prev.t, s.t
                ))),
            });
        }
        q = propagate(q, prev.gyro, s.gyro, dt);
        out.push(q);
        prev = s;
    }
    Ok(out)
}
