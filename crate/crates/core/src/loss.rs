//! Quaternion losses.
//!
//! Every kind has a per-pair kernel ([`pair_loss`]); batch losses are the
//! arithmetic mean over pairs, summed left to right so results are
//! bit-stable. [`loss_gradient`] differentiates a per-pair loss with respect
//! to the raw estimator output *before* unit scaling, i.e. the loss is
//! `L(q_true, p / |p|)`.
//!
//! At points where a loss is not differentiable (saturated clamps, absolute
//! values at zero, L1 kinks) the gradient contribution is taken as 0.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{Quaternion, Vec3, UNIT_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `1 − |q·p|`
    Qip,
    /// `acos(q·p)`, the half angle; not double-cover safe.
    Qipa,
    /// Inner product of the two difference vectors, `−|q − p|²`. Negative
    /// everywhere except at equality; kept for completeness, not recommended.
    QipMse,
    /// `2·‖imag(q ⊗ p*)‖₁`
    Qme,
    /// `2·acos(|scalar(q ⊗ p*)|)`, the total rotation angle.
    Qmea,
    /// `1 − |scalar(q ⊗ p*)|`
    QmeaNt,
    /// Inclination error `2·acos(√(w² + z²))` of `q ⊗ p*`.
    EI,
    /// `1 − √(w² + z²)` of `q ⊗ p*`.
    EINt,
    /// `|1 − |scalar(q ⊗ p*)||`
    Qsgd,
    /// `√(1 − |scalar(q ⊗ p*)|)`
    Qsgd2,
    /// Residual `[w − 1, x, y, z]` of `q ⊗ p*`; as a scalar loss it is
    /// reduced by the mean of its squared components.
    Qsgd3Residual,
}

impl LossKind {
    pub const ALL: [LossKind; 11] = [
        LossKind::Qip,
        LossKind::Qipa,
        LossKind::QipMse,
        LossKind::Qme,
        LossKind::Qmea,
        LossKind::QmeaNt,
        LossKind::EI,
        LossKind::EINt,
        LossKind::Qsgd,
        LossKind::Qsgd2,
        LossKind::Qsgd3Residual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Qip => "qip",
            LossKind::Qipa => "qipa",
            LossKind::QipMse => "qip-mse",
            LossKind::Qme => "qme",
            LossKind::Qmea => "qmea",
            LossKind::QmeaNt => "qmea-nt",
            LossKind::EI => "e-i",
            LossKind::EINt => "e-i-nt",
            LossKind::Qsgd => "qsgd",
            LossKind::Qsgd2 => "qsgd2",
            LossKind::Qsgd3Residual => "qsgd3",
        }
    }

    /// False only for the vector-valued QSGD3 residual.
    pub fn is_scalar(self) -> bool {
        self != LossKind::Qsgd3Residual
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "qsgd3-residual" && *k == LossKind::Qsgd3Residual))
            .ok_or_else(|| Error::Unknown {
                what: "loss kind",
                name: s.to_string(),
            })
    }
}

/// Pairs of `(q_true, q_est)` unit quaternions.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBatch {
    pairs: Vec<(Quaternion, Quaternion)>,
}

impl LossBatch {
    pub fn new(pairs: Vec<(Quaternion, Quaternion)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("loss batch"));
        }
        for (i, (q, p)) in pairs.iter().enumerate() {
            if !q.is_unit(UNIT_TOLERANCE) || !p.is_unit(UNIT_TOLERANCE) {
                return Err(Error::invalid(format!("loss batch pair {i} is not unit: {q}, {p}")));
            }
        }
        Ok(LossBatch { pairs })
    }

    pub fn pairs(&self) -> &[(Quaternion, Quaternion)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Components of `q ⊗ p*` as linear forms in `p`; row `j` dotted with `p`
/// gives component `j` (w, x, y, z).
fn error_rows(q: Quaternion) -> [Quaternion; 4] {
    [
        q,
        Quaternion::new(q.x, -q.w, q.z, -q.y),
        Quaternion::new(q.y, -q.z, -q.w, q.x),
        Quaternion::new(q.z, q.y, -q.x, -q.w),
    ]
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `q ⊗ p*`.
fn mult_error(q: Quaternion, p: Quaternion) -> Quaternion {
    q * p.conjugate()
}

/// Per-pair loss value.
pub fn pair_loss(kind: LossKind, q: Quaternion, p: Quaternion) -> f64 {
    match kind {
        LossKind::Qip => 1.0 - q.dot(p).abs(),
        LossKind::Qipa => 2.0 * (q - p).norm().atan2((q + p).norm()),
        LossKind::QipMse => (q - p).dot(p - q),
        LossKind::Qme => {
            let e = mult_error(q, p);
            2.0 * (e.x.abs() + e.y.abs() + e.z.abs())
        }
        LossKind::Qmea => crate::quat::rotation_angle(mult_error(q, p)),
        LossKind::QmeaNt => {
            let w = mult_error(q, p).w;
            1.0 - (w * w).sqrt()
        }
        LossKind::EI => {
            let e = mult_error(q, p);
            2.0 * (e.x * e.x + e.y * e.y).sqrt().atan2((e.w * e.w + e.z * e.z).sqrt())
        }
        LossKind::EINt => {
            let e = mult_error(q, p);
            1.0 - (e.w * e.w + e.z * e.z).sqrt()
        }
        LossKind::Qsgd => (1.0 - mult_error(q, p).w.abs()).abs(),
        LossKind::Qsgd2 => {
            // 1 − |w| = ‖v‖²/(1 + |w|) for unit e
            let e = mult_error(q, p);
            (e.vector().norm_squared() / (1.0 + e.w.abs())).sqrt()
        }
        LossKind::Qsgd3Residual => {
            let r = qsgd3_residual(q, p);
            r.iter().map(|c| c * c).sum::<f64>() / 4.0
        }
    }
}

/// `[w_err − 1, x_err, y_err, z_err]` of `q_true ⊗ q_est*`.
pub fn qsgd3_residual(q_true: Quaternion, q_est: Quaternion) -> [f64; 4] {
    let e = mult_error(q_true, q_est);
    [e.w - 1.0, e.x, e.y, e.z]
}

/// Arithmetic mean of the per-pair losses.
pub fn batch_loss(kind: LossKind, batch: &LossBatch) -> f64 {
    let mut sum = 0.0;
    for (q, p) in batch.pairs() {
        sum += pair_loss(kind, *q, *p);
    }
    sum / batch.len() as f64
}

pub fn qip_loss(batch: &LossBatch) -> f64 {
    batch_loss(LossKind::Qip, batch)
}

pub fn qipa_loss(batch: &LossBatch) -> f64 {
    batch_loss(LossKind::Qipa, batch)
}

pub fn qip_mse_loss(batch: &LossBatch) -> f64 {
    batch_loss(LossKind::QipMse, batch)
}

pub fn qme_loss(batch: &LossBatch) -> f64 {
    batch_loss(LossKind::Qme, batch)
}

pub fn qmea_loss(batch: &LossBatch) -> f64 {
    batch_loss(LossKind::Qmea, batch)
}

pub fn qmea_nt_loss(batch: &LossBatch) -> f64 {
    batch_loss(LossKind::QmeaNt, batch)
}

/// Inclination loss, trigonometric (`trig = true`) or square-root form.
pub fn inclination_loss(batch: &LossBatch, trig: bool) -> f64 {
    batch_loss(if trig { LossKind::EI } else { LossKind::EINt }, batch)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QsgdVariant {
    Abs,
    Sqrt,
}

pub fn qsgd_loss(batch: &LossBatch, variant: QsgdVariant) -> f64 {
    match variant {
        QsgdVariant::Abs => batch_loss(LossKind::Qsgd, batch),
        QsgdVariant::Sqrt => batch_loss(LossKind::Qsgd2, batch),
    }
}

/// Gradient with respect to `∂/∂p` of the per-pair loss at unit `p`,
/// before the projection through unit scaling.
fn unit_gradient(kind: LossKind, q: Quaternion, p: Quaternion) -> Quaternion {
    let zero = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    let rows = error_rows(q);
    let d = q.dot(p);
    match kind {
        LossKind::Qip | LossKind::QmeaNt => q.scale(-sgn(d)),
        LossKind::Qipa => {
            if d.abs() < 1.0 {
                q.scale(-1.0 / (1.0 - d * d).sqrt())
            } else {
                zero
            }
        }
        LossKind::QipMse => (q - p).scale(2.0),
        LossKind::Qme => rows[1..]
            .iter()
            .fold(zero, |acc, row| acc + row.scale(2.0 * sgn(row.dot(p)))),
        LossKind::Qmea => {
            if d != 0.0 && d.abs() < 1.0 {
                q.scale(-2.0 * sgn(d) / (1.0 - d * d).sqrt())
            } else {
                zero
            }
        }
        LossKind::EI | LossKind::EINt => {
            let ez = rows[3].dot(p);
            let r = (d * d + ez * ez).sqrt();
            if r == 0.0 {
                return zero;
            }
            let dr = q.scale(d / r) + rows[3].scale(ez / r);
            if kind == LossKind::EINt {
                dr.scale(-1.0)
            } else if r < 1.0 {
                dr.scale(-2.0 / (1.0 - r * r).sqrt())
            } else {
                zero
            }
        }
        LossKind::Qsgd => q.scale(-sgn(d) * sgn(1.0 - d.abs())),
        LossKind::Qsgd2 => {
            let u = 1.0 - d.abs();
            if u > 0.0 {
                q.scale(-sgn(d) / (2.0 * u.sqrt()))
            } else {
                zero
            }
        }
        LossKind::Qsgd3Residual => unreachable!("vector-valued kind"),
    }
}

/// Gradient of the per-pair loss `L(q_true, p / |p|)` with respect to the
/// four components of the raw estimate `p`.
pub fn loss_gradient(kind: LossKind, q_true: Quaternion, q_est: Quaternion) -> Result<[f64; 4]> {
    if !kind.is_scalar() {
        return Err(Error::UnsupportedKind(kind.to_string()));
    }
    let n = q_est.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid(format!("cannot differentiate at {q_est}")));
    }
    let p = q_est.scale(1.0 / n);
    let g = unit_gradient(kind, q_true, p);
    // d(p/|p|)/dp = (I − p̂ p̂ᵀ)/|p|
    let projected = (g - p.scale(g.dot(p))).scale(1.0 / n);
    Ok(projected.to_array())
}

/// Loss against rotation angle, sweeping `steps` angles from π down to 0.
/// The truth is the identity and the estimate a rotation about `axis`.
pub fn loss_landscape(kind: LossKind, axis: Vec3, steps: usize) -> Result<Vec<(f64, f64)>> {
    if steps < 2 {
        return Err(Error::invalid("loss landscape needs at least 2 steps"));
    }
    let last = (steps - 1) as f64;
    (0..steps)
        .map(|k| {
            let angle = PI * (1.0 - k as f64 / last);
            let p = Quaternion::from_axis_angle(axis, angle)?;
            Ok((angle, pair_loss(kind, Quaternion::IDENTITY, p)))
        })
        .collect()
}
