//! Accelerometer + gyroscope attitude filters.
//!
//! All four filters share the same gyro propagation as
//! [`dead_reckon`](crate::imu::dead_reckon): the exponential map of the
//! trapezoidal mean rate over the sample interval. They differ only in how
//! the accelerometer corrects roll and pitch; yaw is unobservable and
//! drifts with the gyro.
//!
//! | kind     | correction                                                  |
//! |----------|-------------------------------------------------------------|
//! | CF       | rotate toward the accelerometer-levelled attitude by `α`    |
//! | Madgwick | normalized gradient step of size `β·dt` on `‖Rᵀẑ − â‖²`      |
//! | Mahony   | rate feedback `Kp·e + Ki·∫e`, `e = â × Rᵀẑ`                  |
//! | EKF      | 3-state multiplicative error EKF, gravity-direction update  |
//!
//! The accelerometer is only trusted while `‖ã‖` lies inside
//! `accel_gate · g` (default `[0.5, 2]`).

mod cf;
mod ekf;
mod madgwick;
mod mahony;

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{propagate, ImuSample};
use crate::quat::{EulerAngles, Quaternion, Vec3};
use crate::STANDARD_GRAVITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Cf,
    Madgwick,
    Mahony,
    Ekf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::Cf,
        FilterKind::Madgwick,
        FilterKind::Mahony,
        FilterKind::Ekf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Cf => "cf",
            FilterKind::Madgwick => "madgwick",
            FilterKind::Mahony => "mahony",
            FilterKind::Ekf => "ekf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                what: "filter",
                name: s.to_string(),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// CF accelerometer weight per step at `cf_reference_rate_hz`.
    pub cf_alpha: f64,
    pub cf_reference_rate_hz: f64,
    pub madgwick_beta: f64,
    pub mahony_kp: f64,
    pub mahony_ki: f64,
    /// EKF gyro noise, rad/s.
    pub ekf_gyro_noise: f64,
    /// EKF accelerometer noise, m/s².
    pub ekf_accel_noise: f64,
    /// Initial error-state covariance, `scale · I` (rad²).
    pub ekf_initial_cov: f64,
    /// Used for the first sample and by [`AttitudeFilter::update_with_dt`]
    /// callers that have no timestamps.
    pub sample_period: f64,
    /// Master switch for every accelerometer correction.
    pub accel_correction: bool,
    /// Accept accelerometer samples with `‖ã‖/g` in this range.
    pub accel_gate: Option<[f64; 2]>,
    pub gravity: f64,
}

impl FilterConfig {
    pub fn new(kind: FilterKind) -> Self {
        FilterConfig {
            kind,
            cf_alpha: 0.02,
            cf_reference_rate_hz: 100.0,
            madgwick_beta: 0.1,
            mahony_kp: 2.0,
            mahony_ki: 0.01,
            ekf_gyro_noise: 0.02,
            ekf_accel_noise: 0.3,
            ekf_initial_cov: 0.1,
            sample_period: 0.01,
            accel_correction: true,
            accel_gate: Some([0.5, 2.0]),
            gravity: STANDARD_GRAVITY,
        }
    }

    /// Applies a `key=value` override. Keys: `alpha`, `beta`, `kp`, `ki`,
    /// `gyro_noise`, `accel_noise`, `init_cov`, `period`, `gravity`,
    /// `gate_lo`, `gate_hi`, `gate` (0 disables), `accel` (0 disables).
    pub fn set_gain(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "alpha" => self.cf_alpha = value,
            "beta" => self.madgwick_beta = value,
            "kp" => self.mahony_kp = value,
            "ki" => self.mahony_ki = value,
            "gyro_noise" => self.ekf_gyro_noise = value,
            "accel_noise" => self.ekf_accel_noise = value,
            "init_cov" => self.ekf_initial_cov = value,
            "period" => self.sample_period = value,
            "gravity" => self.gravity = value,
            "gate_lo" | "gate_hi" => {
                let mut gate = self.accel_gate.unwrap_or([0.5, 2.0]);
                gate[usize::from(key == "gate_hi")] = value;
                self.accel_gate = Some(gate);
            }
            "gate" => {
                self.accel_gate = if value == 0.0 {
                    None
                } else {
                    Some(self.accel_gate.unwrap_or([0.5, 2.0]))
                }
            }
            "accel" => self.accel_correction = value != 0.0,
            _ => {
                return Err(Error::Unknown {
                    what: "filter gain",
                    name: key.to_string(),
                })
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.cf_alpha)
            && self.cf_reference_rate_hz > 0.0
            && self.madgwick_beta >= 0.0
            && self.mahony_kp >= 0.0
            && self.mahony_ki >= 0.0
            && self.ekf_gyro_noise > 0.0
            && self.ekf_accel_noise > 0.0
            && self.ekf_initial_cov > 0.0
            && self.sample_period > 0.0
            && self.gravity > 0.0
            && self.accel_gate.is_none_or(|[lo, hi]| 0.0 <= lo && lo < hi);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid filter configuration: {self:?}")))
        }
    }

    fn accel_usable(&self, accel: &Vec3) -> bool {
        let n = accel.norm();
        if n == 0.0 {
            return false;
        }
        match self.accel_gate {
            Some([lo, hi]) => (lo * self.gravity..=hi * self.gravity).contains(&n),
            None => true,
        }
    }
}

/// Mutable state of one filter instance.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub q: Quaternion,
    /// Mahony integral term, rad/s.
    pub integral: Vec3,
    /// EKF error-state covariance, rad².
    pub cov: Matrix3<f64>,
    pub last_t: Option<f64>,
    last_gyro: Option<Vec3>,
    poisoned: bool,
}

impl FilterState {
    fn new(q: Quaternion, config: &FilterConfig) -> Self {
        FilterState {
            q,
            integral: Vec3::zeros(),
            cov: Matrix3::identity() * config.ekf_initial_cov,
            last_t: None,
            last_gyro: None,
            poisoned: false,
        }
    }
}

/// Roll and pitch from the gravity direction, yaw = 0.
///
/// Returns the identity and `true` (warning) when `‖ã‖ ≤ 0.5·g`, where the
/// direction of the specific force says nothing about gravity.
pub fn init_from_accel(accel: Vec3, gravity: f64) -> (Quaternion, bool) {
    if !(accel.norm() > 0.5 * gravity) {
        return (Quaternion::IDENTITY, true);
    }
    let roll = accel.y.atan2(accel.z);
    let pitch = (-accel.x).atan2((accel.y * accel.y + accel.z * accel.z).sqrt());
    (Quaternion::from_euler(EulerAngles::new(roll, pitch, 0.0)), false)
}

/// A filter instance: configuration plus state.
#[derive(Clone, Debug)]
pub struct AttitudeFilter {
    config: FilterConfig,
    state: FilterState,
}

impl AttitudeFilter {
    pub fn new(config: FilterConfig, initial: Quaternion) -> Result<Self> {
        config.validate()?;
        let q = initial.normalize()?;
        let state = FilterState::new(q, &config);
        Ok(AttitudeFilter { config, state })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn quaternion(&self) -> Quaternion {
        self.state.q
    }

    /// One fusion step, with `dt` taken from the sample timestamps. The first
    /// sample only applies the accelerometer correction.
    pub fn update(&mut self, sample: &ImuSample) -> Result<Quaternion> {
        let dt = match self.state.last_t {
            None => None,
            Some(last) => {
                let dt = sample.t - last;
                if !(dt > 0.0) {
                    if !dt.is_nan() {
                        return Err(Error::invalid(format!(
                            "non-positive time step {dt} at t = {}",
                            sample.t
                        )));
                    }
                    None
                } else {
                    Some(dt)
                }
            }
        };
        self.step(sample, dt)
    }

    /// One fusion step with an explicit interval, ignoring timestamps.
    pub fn update_with_dt(&mut self, sample: &ImuSample, dt: f64) -> Result<Quaternion> {
        if !(dt > 0.0) && !dt.is_nan() {
            return Err(Error::invalid(format!("non-positive time step {dt}")));
        }
        self.step(sample, Some(dt))
    }

    fn step(&mut self, sample: &ImuSample, dt: Option<f64>) -> Result<Quaternion> {
        if self.state.poisoned {
            return Err(Error::PoisonedState(
                "an earlier update received non-finite input".into(),
            ));
        }
        let finite_dt = dt.is_none_or(f64::is_finite);
        if !finite_dt || !sample.gyro.iter().chain(sample.accel.iter()).all(|v| v.is_finite()) {
            self.state.poisoned = true;
            return Err(Error::PoisonedState(format!("non-finite input at t = {}", sample.t)));
        }
        let cfg = &self.config;
        let st = &mut self.state;
        let prev_gyro = st.last_gyro.unwrap_or(sample.gyro);
        let accel = (cfg.accel_correction && cfg.accel_usable(&sample.accel)).then(|| sample.accel.normalize());
        match dt {
            Some(dt) => match cfg.kind {
                FilterKind::Mahony if cfg.accel_correction => mahony::step(cfg, st, prev_gyro, sample.gyro, accel, dt),
                FilterKind::Ekf => {
                    let q_pred = propagate(st.q, prev_gyro, sample.gyro, dt);
                    st.q = q_pred;
                    ekf::propagate_covariance(cfg, st, prev_gyro, sample.gyro, dt);
                    if let Some(a) = accel {
                        ekf::correct(cfg, st, a);
                    }
                }
                _ => {
                    st.q = propagate(st.q, prev_gyro, sample.gyro, dt);
                    if let Some(a) = accel {
                        correct_static(cfg, st, a, dt);
                    }
                }
            },
            None => {
                if let Some(a) = accel {
                    match cfg.kind {
                        FilterKind::Mahony => {
                            mahony::step(cfg, st, Vec3::zeros(), Vec3::zeros(), Some(a), cfg.sample_period)
                        }
                        FilterKind::Ekf => ekf::correct(cfg, st, a),
                        _ => correct_static(cfg, st, a, cfg.sample_period),
                    }
                }
            }
        }
        st.last_t = Some(sample.t);
        st.last_gyro = Some(sample.gyro);
        Ok(st.q)
    }
}

fn correct_static(cfg: &FilterConfig, st: &mut FilterState, accel_dir: Vec3, dt: f64) {
    match cfg.kind {
        FilterKind::Cf => cf::correct(cfg, st, accel_dir, dt),
        FilterKind::Madgwick => madgwick::correct(cfg, st, accel_dir, dt),
        FilterKind::Mahony | FilterKind::Ekf => unreachable!("handled by the caller"),
    }
}

/// Runs a filter over a trial: initial attitude from the first
/// accelerometer sample, then one update per sample.
pub fn run(config: &FilterConfig, trial: &[ImuSample]) -> Result<Vec<Quaternion>> {
    let first = trial.first().ok_or(Error::EmptyInput("filter trial"))?;
    let (q0, degenerate) = init_from_accel(first.accel, config.gravity);
    if degenerate {
        log::warn!("first accelerometer sample is near free fall; starting from identity");
    }
    let mut filter = AttitudeFilter::new(config.clone(), q0)?;
    trial
        .iter()
        .enumerate()
        .map(|(index, s)| {
            filter.update(s).map_err(|e| Error::AtSample {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu::{dead_reckon, default_gravity, generate_trajectory, measure};
    use crate::imu::{BiasSpec, Motion, NoiseSpec, TrajectorySpec};
    use crate::quat::error_angle;
    use approx::assert_abs_diff_eq;

    fn static_trial(roll_deg: f64, pitch_deg: f64, seconds: f64) -> Vec<ImuSample> {
        let spec = TrajectorySpec::new(Motion::Static, seconds, 100.0)
            .with_initial(EulerAngles::from_degrees(roll_deg, pitch_deg, 0.0));
        let truth = generate_trajectory(&spec).unwrap();
        measure(
            &truth,
            &NoiseSpec::default(),
            &BiasSpec::default(),
            default_gravity(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn init_from_accel_examples() {
        let (q, warn) = init_from_accel(Vec3::new(0.0, 0.0, 9.81), STANDARD_GRAVITY);
        assert_eq!(q, Quaternion::IDENTITY);
        assert!(!warn);

        let trial = static_trial(30.0, 0.0, 1.0);
        let (q, warn) = init_from_accel(trial[0].accel, STANDARD_GRAVITY);
        assert!(!warn);
        let e = q.to_euler().unwrap();
        assert_abs_diff_eq!(e.roll, 30f64.to_radians(), epsilon = 1e-9);
        assert_abs_diff_eq!(e.pitch, 0.0, epsilon = 1e-9);

        let (q, warn) = init_from_accel(Vec3::zeros(), STANDARD_GRAVITY);
        assert_eq!(q, Quaternion::IDENTITY);
        assert!(warn);
    }

    #[test]
    fn level_static_stays_level() {
        let trial = static_trial(0.0, 0.0, 1.0);
        for kind in FilterKind::ALL {
            let est = run(&FilterConfig::new(kind), &trial).unwrap();
            assert_eq!(est.len(), trial.len());
            let err = error_angle(Quaternion::IDENTITY, *est.last().unwrap()).unwrap();
            assert!(err.to_degrees() < 0.1, "{kind}: {err}");
        }
    }

    #[test]
    fn disabled_correction_equals_dead_reckoning() {
        let spec = TrajectorySpec::new(
            Motion::Sinusoidal {
                axis: [1.0, 1.0, 0.0],
                amplitude: 0.5,
                frequency: 0.3,
            },
            3.0,
            100.0,
        )
        .with_initial(EulerAngles::from_degrees(10.0, -5.0, 0.0));
        let truth = generate_trajectory(&spec).unwrap();
        let noise = NoiseSpec {
            gyro_std: 0.01,
            accel_std: 0.2,
            seed: Some(3),
        };
        let trial = measure(&truth, &noise, &BiasSpec::default(), default_gravity(), 0).unwrap();
        let (q0, _) = init_from_accel(trial[0].accel, STANDARD_GRAVITY);
        let reference = dead_reckon(&trial, q0).unwrap();
        for kind in FilterKind::ALL {
            let mut cfg = FilterConfig::new(kind);
            cfg.accel_correction = false;
            assert_eq!(run(&cfg, &trial).unwrap(), reference, "{kind}");
        }
        // zero gains disable the correction too
        let mut cf = FilterConfig::new(FilterKind::Cf);
        cf.cf_alpha = 0.0;
        let mut mw = FilterConfig::new(FilterKind::Madgwick);
        mw.madgwick_beta = 0.0;
        let mut mh = FilterConfig::new(FilterKind::Mahony);
        mh.mahony_kp = 0.0;
        mh.mahony_ki = 0.0;
        for cfg in [cf, mw, mh] {
            let est = run(&cfg, &trial).unwrap();
            for (a, b) in est.iter().zip(&reference) {
                assert!(error_angle(*a, *b).unwrap() < 1e-9, "{}", cfg.kind);
            }
        }
    }

    #[test]
    fn update_errors() {
        let mut f = AttitudeFilter::new(FilterConfig::new(FilterKind::Cf), Quaternion::IDENTITY).unwrap();
        let s = |t: f64| ImuSample::new(t, Vec3::zeros(), default_gravity());
        f.update(&s(0.0)).unwrap();
        f.update(&s(0.01)).unwrap();
        assert!(matches!(f.update(&s(0.01)), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            f.update_with_dt(&s(0.02), -1.0),
            Err(Error::InvalidArgument(_))
        ));
        let mut bad = s(0.02);
        bad.gyro.x = f64::NAN;
        assert!(matches!(f.update(&bad), Err(Error::PoisonedState(_))));
        assert!(matches!(f.update(&s(0.03)), Err(Error::PoisonedState(_))));
    }

    #[test]
    fn run_reports_sample_index() {
        let mut trial = static_trial(0.0, 0.0, 0.1);
        trial[4].t = trial[3].t;
        let err = run(&FilterConfig::new(FilterKind::Madgwick), &trial).unwrap_err();
        assert!(matches!(err, Error::AtSample { index: 4, .. }));
        assert!(run(&FilterConfig::new(FilterKind::Cf), &[]).is_err());
    }

    #[test]
    fn gains_parse_and_validate() {
        let mut cfg = FilterConfig::new(FilterKind::Mahony);
        cfg.set_gain("kp", 2.0).unwrap();
        cfg.set_gain("gate", 0.0).unwrap();
        assert_eq!(cfg.mahony_kp, 2.0);
        assert_eq!(cfg.accel_gate, None);
        assert!(cfg.set_gain("alpha", 1.5).is_err());
        assert!(cfg.set_gain("nope", 1.0).is_err());
        assert_eq!("EKF".parse::<FilterKind>().unwrap(), FilterKind::Ekf);
    }

    #[test]
    fn high_dynamic_accel_is_gated_out() {
        let mut cfg = FilterConfig::new(FilterKind::Cf);
        cfg.cf_alpha = 1.0;
        let mut f = AttitudeFilter::new(cfg, Quaternion::IDENTITY).unwrap();
        // 3 g pointing sideways would level to 90° roll if accepted
        let s = ImuSample::new(0.0, Vec3::zeros(), Vec3::new(0.0, 3.0 * STANDARD_GRAVITY, 0.0));
        assert_eq!(f.update(&s).unwrap(), Quaternion::IDENTITY);
    }

    #[test]
    fn ekf_covariance_stays_symmetric_psd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut f = AttitudeFilter::new(FilterConfig::new(FilterKind::Ekf), Quaternion::IDENTITY).unwrap();
        for k in 0..10_000 {
            let gyro = Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let accel = Vec3::from_fn(|_, _| rng.random_range(-12.0..12.0));
            f.update(&ImuSample::new(k as f64 * 0.01, gyro, accel)).unwrap();
            let p = f.state().cov;
            assert!((p - p.transpose()).abs().max() < 1e-15);
            let min_eig = p.symmetric_eigenvalues().min();
            assert!(min_eig >= -1e-9, "step {k}: {min_eig}");
            assert!((f.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }
}
