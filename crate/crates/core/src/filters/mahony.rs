use super::{FilterConfig, FilterState};
use crate::imu::propagate;
use crate::quat::Vec3;

/// Explicit complementary filter: the gravity-direction error feeds back
/// into the body rate through a PI law before propagation.
pub(super) fn step(
    cfg: &FilterConfig,
    st: &mut FilterState,
    prev_gyro: Vec3,
    gyro: Vec3,
    accel_dir: Option<Vec3>,
    dt: f64,
) {
    let mut feedback = Vec3::zeros();
    if let Some(a) = accel_dir {
        let predicted_up = st.q.inverse_rotate(Vec3::z());
        let e = a.cross(&predicted_up);
        if cfg.mahony_ki > 0.0 {
            st.integral += e * (cfg.mahony_ki * dt);
        }
        feedback = e * cfg.mahony_kp;
    }
    let correction = feedback + st.integral;
    st.q = propagate(st.q, prev_gyro + correction, gyro + correction, dt);
}
