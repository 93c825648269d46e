//! Inertial attitude estimation toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`quat`] quaternion algebra and the attitude-error calculus every other
//!   module builds on,
//! * [`loss`] quaternion losses with analytic gradients and landscape sweeps,
//! * [`imu`] synthetic trajectories, the IMU measurement model and gyro
//!   dead reckoning,
//! * [`filters`] complementary, Madgwick, Mahony and EKF baselines,
//! * [`dataset`] the on-disk trial schema, resampling and windowing,
//! * [`nn`] the CNN/LSTM layer set, Model A / Model B graphs and a
//!   finite-difference micro trainer,
//! * [`sched`] learning-rate schedules and the LR finder,
//! * [`eval`] the benchmark harness and report rendering.
//!
//! Angles are radians everywhere except in evaluation reports, which use
//! degrees.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod filters;
pub mod imu;
pub mod loss;
pub mod nn;
pub mod quat;
pub mod sched;

pub use dataset::{TrialFile, TrialMeta, Window, WindowSpec};
pub use error::{Error, Result};
pub use filters::{FilterConfig, FilterKind};
pub use imu::ImuSample;
pub use loss::LossKind;
pub use quat::{EulerAngles, Quaternion, Vec3};

/// Standard gravity in m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Default RNG seed; the CLI lets `ATTIKIT_SEED` override it.
pub const DEFAULT_SEED: u64 = 0;
