use super::{FilterConfig, FilterState};
use crate::quat::{Quaternion, Vec3};

/// Rotates the estimate toward the accelerometer-levelled attitude.
///
/// The correction is the shortest rotation taking the measured gravity
/// direction (expressed in the world frame through the current estimate)
/// onto world up, scaled by the per-step weight. Its axis is horizontal, so
/// yaw is left alone. The weight is rescaled from the reference rate so the
/// time constant does not depend on the sampling rate.
pub(super) fn correct(cfg: &FilterConfig, st: &mut FilterState, accel_dir: Vec3, dt: f64) {
    if cfg.cf_alpha == 0.0 {
        return;
    }
    let weight = 1.0 - (1.0 - cfg.cf_alpha).powf(dt * cfg.cf_reference_rate_hz);
    let measured_up = st.q.rotate(accel_dir);
    let axis = measured_up.cross(&Vec3::z());
    let s = axis.norm();
    if s < 1e-15 {
        return;
    }
    let angle = s.atan2(measured_up.z);
    let correction = Quaternion::from_rotation_vector(axis * (weight * angle / s));
    if let Ok(q) = (correction * st.q).normalize() {
        st.q = q;
    }
}
