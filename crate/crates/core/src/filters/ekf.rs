use nalgebra::Matrix3;

use super::{FilterConfig, FilterState};
use crate::quat::{Quaternion, Vec3};

fn skew(v: Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn symmetrize(p: &mut Matrix3<f64>) {
    *p = (*p + p.transpose()) * 0.5;
}

/// Error state `δθ` is a body-frame rotation vector, `q_true = q ⊗ Exp(δθ)`;
/// over one step it is carried by the inverse of the incremental rotation.
pub(super) fn propagate_covariance(cfg: &FilterConfig, st: &mut FilterState, prev_gyro: Vec3, gyro: Vec3, dt: f64) {
    let increment = Quaternion::from_rotation_vector((prev_gyro + gyro) * (0.5 * dt));
    let f = increment.rotation_matrix().transpose();
    let q_var = (cfg.ekf_gyro_noise * dt).powi(2);
    st.cov = f * st.cov * f.transpose() + Matrix3::identity() * q_var;
    symmetrize(&mut st.cov);
}

/// Gravity-direction update: `z = â`, `h(q) = Rᵀẑ`, `H = [h]×`. The
/// component of the correction about the vertical is dropped, since gravity
/// carries no heading information.
pub(super) fn correct(cfg: &FilterConfig, st: &mut FilterState, accel_dir: Vec3) {
    let predicted = st.q.inverse_rotate(Vec3::z());
    let h = skew(predicted);
    let r_var = (cfg.ekf_accel_noise / cfg.gravity).powi(2);
    let r = Matrix3::identity() * r_var;
    let s = h * st.cov * h.transpose() + r;
    let Some(s_inv) = s.try_inverse() else {
        return;
    };
    let k = st.cov * h.transpose() * s_inv;
    let mut delta = k * (accel_dir - predicted);
    delta -= predicted * delta.dot(&predicted);
    if let Ok(q) = (st.q * Quaternion::from_rotation_vector(delta)).normalize() {
        st.q = q;
    }
    let i_kh = Matrix3::identity() - k * h;
    st.cov = i_kh * st.cov * i_kh.transpose() + k * r * k.transpose();
    symmetrize(&mut st.cov);
}
