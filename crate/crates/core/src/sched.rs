//! Learning-rate schedules and the learning-rate finder.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the cyclical schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleForm {
    /// `lower/2 + upper/2·(1 + cos(step/stepsize))`, period `2π·stepsize`.
    /// Peaks at `lower/2 + upper`, so it overshoots `upper`.
    #[default]
    AsPaper,
    /// Linear ramp between the bounds, period `2·stepsize`.
    Triangular,
}

impl FromStr for CycleForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-paper" => Ok(CycleForm::AsPaper),
            "triangular" => Ok(CycleForm::Triangular),
            other => Err(Error::Unknown {
                what: "cycle form",
                name: other.into(),
            }),
        }
    }
}

impl fmt::Display for CycleForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CycleForm::AsPaper => "as-paper",
            CycleForm::Triangular => "triangular",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepChange {
    /// Multiply by this factor at every boundary.
    Factor(f64),
    /// Subtract this amount at every boundary.
    Amount(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleSpec {
    Constant {
        lr: f64,
    },
    Exponential {
        initial_lr: f64,
        decay_rate: f64,
        decay_step: f64,
    },
    Stepwise {
        initial_lr: f64,
        change: StepChange,
        boundaries: Vec<f64>,
    },
    Cyclical {
        lower_bound: f64,
        upper_bound: f64,
        stepsize: f64,
        #[serde(default)]
        form: CycleForm,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be > 0, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be >= 0, got {v}")))
    }
}

impl ScheduleSpec {
    pub fn constant(lr: f64) -> Self {
        ScheduleSpec::Constant { lr }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScheduleSpec::Constant { lr } => non_negative("lr", *lr),
            ScheduleSpec::Exponential {
                initial_lr,
                decay_rate,
                decay_step,
            } => {
                positive("initial_lr", *initial_lr)?;
                positive("decay_rate", *decay_rate)?;
                positive("decay_step", *decay_step)
            }
            ScheduleSpec::Stepwise {
                initial_lr,
                change,
                boundaries,
            } => {
                positive("initial_lr", *initial_lr)?;
                if boundaries.windows(2).any(|b| b[1] <= b[0]) || boundaries.iter().any(|b| !b.is_finite()) {
                    return Err(Error::invalid("stepwise boundaries must be finite and increasing"));
                }
                match change {
                    StepChange::Factor(f) => positive("factor", *f),
                    StepChange::Amount(a) => {
                        if !(a.is_finite() && *a >= 0.0) {
                            return Err(Error::invalid(format!("amount must be >= 0, got {a}")));
                        }
                        positive("final stepwise lr", initial_lr - a * boundaries.len() as f64)
                    }
                }
            }
            ScheduleSpec::Cyclical {
                lower_bound,
                upper_bound,
                stepsize,
                ..
            } => {
                positive("lower_bound", *lower_bound)?;
                positive("stepsize", *stepsize)?;
                if !(upper_bound > lower_bound && upper_bound.is_finite()) {
                    return Err(Error::invalid(format!(
                        "cyclical bounds need lower < upper, got {lower_bound} and {upper_bound}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Learning rate at `step` (real-valued, ≥ 0).
pub fn lr_at(spec: &ScheduleSpec, step: f64) -> Result<f64> {
    spec.validate()?;
    if !(step >= 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be >= 0, got {step}")));
    }
    Ok(match spec {
        ScheduleSpec::Constant { lr } => *lr,
        ScheduleSpec::Exponential {
            initial_lr,
            decay_rate,
            decay_step,
        } => initial_lr * decay_rate.powf(step / decay_step),
        ScheduleSpec::Stepwise {
            initial_lr,
            change,
            boundaries,
        } => {
            let passed = boundaries.iter().filter(|&&b| step >= b).count();
            match change {
                StepChange::Factor(f) => initial_lr * f.powi(passed as i32),
                StepChange::Amount(a) => initial_lr - a * passed as f64,
            }
        }
        ScheduleSpec::Cyclical {
            lower_bound,
            upper_bound,
            stepsize,
            form,
        } => match form {
            CycleForm::AsPaper => lower_bound / 2.0 + upper_bound / 2.0 * (1.0 + (step / stepsize).cos()),
            CycleForm::Triangular => {
                let cycle = (1.0 + step / (2.0 * stepsize)).floor();
                let x = (step / stepsize - 2.0 * cycle + 1.0).abs();
                lower_bound + (upper_bound - lower_bound) * (1.0 - x).max(0.0)
            }
        },
    })
}

/// `count` geometrically spaced points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    positive("grid start", lo)?;
    if !(hi > lo && hi.is_finite()) || count < 2 {
        return Err(Error::invalid(format!(
            "geometric grid needs 0 < lo < hi and at least 2 points, got {lo}..{hi} x {count}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// 20 points from 1e-6 to 1e-1.
pub fn default_lr_grid() -> Vec<f64> {
    geometric_grid(1e-6, 1e-1, 20).expect("static grid")
}

/// Loss after a short training probe at a given learning rate, always
/// starting from the same weight snapshot.
pub trait LrProbe: Sync {
    fn probe(&self, lr: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> LrProbe for F {
    fn probe(&self, lr: f64) -> f64 {
        self(lr)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrFindResult {
    pub lr: f64,
    pub index: usize,
    /// Every usable slope was below 1e-12 in magnitude; `lr` is then the
    /// smallest grid value.
    pub flat: bool,
    /// `(lr, loss)` for the whole grid, including non-finite losses.
    pub trace: Vec<(f64, f64)>,
    /// Smoothed `d loss / d ln(lr)` for the usable prefix.
    pub slopes: Vec<f64>,
}

pub const FLAT_SLOPE: f64 = 1e-12;

/// Runs the probe at every grid point and picks the learning rate where the
/// smoothed loss falls fastest against `ln(lr)`. Points from the first
/// non-finite loss onwards are ignored.
pub fn lr_find<P: LrProbe + ?Sized>(probe: &P, grid: &[f64]) -> Result<LrFindResult> {
    if grid.len() < 4 {
        return Err(Error::invalid(format!(
            "lr grid needs at least 4 points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lr grid must be positive and strictly increasing"));
    }
    let losses: Vec<f64> = grid.par_iter().map(|&lr| probe.probe(lr)).collect();
    let trace: Vec<(f64, f64)> = grid.iter().copied().zip(losses.iter().copied()).collect();
    let usable = losses.iter().take_while(|l| l.is_finite()).count();
    if usable == 0 {
        return Err(Error::NoUsableLr);
    }
    let x: Vec<f64> = grid[..usable].iter().map(|l| l.ln()).collect();
    let smooth = moving_average3(&losses[..usable]);
    let slopes = log_slopes(&x, &smooth);
    let flat = slopes.iter().all(|s| s.abs() < FLAT_SLOPE);
    let index = if flat {
        0
    } else {
        slopes
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if *s < slopes[best] { i } else { best })
    };
    Ok(LrFindResult {
        lr: grid[index],
        index,
        flat,
        trace,
        slopes,
    })
}

/// Centered 3-point mean; the ends average the two available points.
fn moving_average3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(v.len() - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Central differences inside, one-sided at the ends; a single point has
/// slope 0.
fn log_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            (y[hi] - y[lo]) / (x[hi] - x[lo])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cyclical(form: CycleForm) -> ScheduleSpec {
        ScheduleSpec::Cyclical {
            lower_bound: 1e-4,
            upper_bound: 1e-2,
            stepsize: 100.0,
            form,
        }
    }

    #[test]
    fn exponential_plug_in() {
        let s = ScheduleSpec::Exponential {
            initial_lr: 0.1,
            decay_rate: 0.5,
            decay_step: 1000.0,
        };
        assert_eq!(lr_at(&s, 1000.0).unwrap(), 0.05);
        assert_eq!(lr_at(&s, 0.0).unwrap(), 0.1);
        assert!(lr_at(&s, 500.0).unwrap() < 0.1);
    }

    #[test]
    fn cyclical_plug_in() {
        let s = cyclical(CycleForm::AsPaper);
        assert_eq!(lr_at(&s, 0.0).unwrap(), 1e-4 / 2.0 + 1e-2 / 2.0 * 2.0);
        assert_abs_diff_eq!(lr_at(&s, 0.0).unwrap(), 0.01005, epsilon = 1e-15);
        assert_abs_diff_eq!(lr_at(&s, PI * 100.0).unwrap(), 5e-5, epsilon = 1e-15);
    }

    #[test]
    fn triangular_stays_in_bounds() {
        let s = cyclical(CycleForm::Triangular);
        assert_abs_diff_eq!(lr_at(&s, 0.0).unwrap(), 1e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(lr_at(&s, 100.0).unwrap(), 1e-2, epsilon = 1e-15);
        assert_abs_diff_eq!(lr_at(&s, 200.0).unwrap(), 1e-4, epsilon = 1e-15);
        for k in 0..1000 {
            let lr = lr_at(&s, k as f64).unwrap();
            assert!((1e-4 - 1e-15..=1e-2 + 1e-15).contains(&lr));
        }
    }

    #[test]
    fn stepwise_factor_and_amount() {
        let f = ScheduleSpec::Stepwise {
            initial_lr: 0.1,
            change: StepChange::Factor(0.5),
            boundaries: vec![10.0, 20.0],
        };
        assert_eq!(lr_at(&f, 9.0).unwrap(), 0.1);
        assert_eq!(lr_at(&f, 10.0).unwrap(), 0.05);
        assert_eq!(lr_at(&f, 25.0).unwrap(), 0.025);
        let a = ScheduleSpec::Stepwise {
            initial_lr: 0.1,
            change: StepChange::Amount(0.03),
            boundaries: vec![10.0, 20.0],
        };
        assert_eq!(lr_at(&a, 20.0).unwrap(), 0.1 - 0.03 * 2.0);
        let bad = ScheduleSpec::Stepwise {
            initial_lr: 0.1,
            change: StepChange::Amount(0.06),
            boundaries: vec![10.0, 20.0],
        };
        assert!(lr_at(&bad, 0.0).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(lr_at(&ScheduleSpec::constant(0.0), 0.0).unwrap(), 0.0);
        assert!(lr_at(&ScheduleSpec::constant(-0.1), 0.0).is_err());
        assert!(lr_at(&ScheduleSpec::constant(0.1), -1.0).is_err());
        let s = ScheduleSpec::Cyclical {
            lower_bound: 1e-2,
            upper_bound: 1e-4,
            stepsize: 1.0,
            form: CycleForm::AsPaper,
        };
        assert!(lr_at(&s, 0.0).is_err());
    }

    #[test]
    fn serde_shape() {
        let s: ScheduleSpec =
            serde_json::from_str(r#"{"kind":"cyclical","lower_bound":1e-4,"upper_bound":1e-2,"stepsize":10}"#).unwrap();
        assert_eq!(s, {
            ScheduleSpec::Cyclical {
                lower_bound: 1e-4,
                upper_bound: 1e-2,
                stepsize: 10.0,
                form: CycleForm::AsPaper,
            }
        });
        assert_eq!("triangular".parse::<CycleForm>().unwrap(), CycleForm::Triangular);
    }

    #[test]
    fn default_grid_endpoints() {
        let g = default_lr_grid();
        assert_eq!(g.len(), 20);
        assert_abs_diff_eq!(g[0], 1e-6, epsilon = 1e-20);
        assert_eq!(g[19], 1e-1);
        for w in g.windows(3) {
            assert_abs_diff_eq!(w[1] / w[0], w[2] / w[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn flat_trace_returns_smallest_lr() {
        let grid = default_lr_grid();
        let r = lr_find(&|_lr: f64| 0.7, &grid).unwrap();
        assert!(r.flat);
        assert_eq!(r.index, 0);
        assert_eq!(r.lr, grid[0]);
    }

    #[test]
    fn nan_tail_is_excluded() {
        let grid = default_lr_grid();
        let cut = grid[12];
        // loss falls fastest right at the cut; everything after it diverges
        let probe = |lr: f64| {
            if lr > cut {
                f64::NAN
            } else {
                -lr.ln() * lr.ln().abs()
            }
        };
        let r = lr_find(&probe, &grid).unwrap();
        assert!(r.index <= 12);
        assert_eq!(r.slopes.len(), 13);
        assert_eq!(r.trace.len(), 20);
    }

    #[test]
    fn all_nan_is_an_error() {
        let grid = default_lr_grid();
        assert!(matches!(lr_find(&|_lr: f64| f64::NAN, &grid), Err(Error::NoUsableLr)));
        assert!(lr_find(&|_lr: f64| 1.0, &grid[..3]).is_err());
    }
}
