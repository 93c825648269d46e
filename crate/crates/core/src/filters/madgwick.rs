use super::{FilterConfig, FilterState};
use crate::quat::{Quaternion, Vec3};

/// Below this gradient norm the step is no longer normalized, so the
/// estimate settles instead of chattering by `β·dt` around the optimum.
const GRADIENT_FLOOR: f64 = 1e-2;

/// Gradient-descent step on `f(q) = Rᵀẑ − â`.
pub(super) fn correct(cfg: &FilterConfig, st: &mut FilterState, a: Vec3, dt: f64) {
    if cfg.madgwick_beta == 0.0 {
        return;
    }
    let Quaternion { w, x, y, z } = st.q;
    let f = [
        2.0 * (x * z - w * y) - a.x,
        2.0 * (w * x + y * z) - a.y,
        2.0 * (0.5 - x * x - y * y) - a.z,
    ];
    // Jᵀ f, columns ordered w, x, y, z
    let grad = Quaternion::new(
        -2.0 * y * f[0] + 2.0 * x * f[1],
        2.0 * z * f[0] + 2.0 * w * f[1] - 4.0 * x * f[2],
        -2.0 * w * f[0] + 2.0 * z * f[1] - 4.0 * y * f[2],
        2.0 * x * f[0] + 2.0 * y * f[1],
    );
    let n = grad.norm();
    if n == 0.0 {
        return;
    }
    let step = grad.scale(cfg.madgwick_beta * dt / n.max(GRADIENT_FLOOR));
    if let Ok(q) = (st.q - step).normalize() {
        st.q = q;
    }
}
