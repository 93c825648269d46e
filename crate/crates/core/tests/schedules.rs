use std::f64::consts::PI;

use attikit::sched::{geometric_grid, lr_at, lr_find, CycleForm, ScheduleSpec, StepChange};

fn cyclical(form: CycleForm) -> ScheduleSpec {
    ScheduleSpec::Cyclical {
        lower_bound: 1e-4,
        upper_bound: 1e-2,
        stepsize: 7.0,
        form,
    }
}

#[test]
fn plug_in_values_are_exact() {
    let exp = ScheduleSpec::Exponential {
        initial_lr: 0.1,
        decay_rate: 0.5,
        decay_step: 100.0,
    };
    assert_eq!(lr_at(&exp, 100.0).unwrap(), 0.05);
    assert_eq!(lr_at(&exp, 0.0).unwrap(), 0.1);
    assert_eq!(lr_at(&cyclical(CycleForm::AsPaper), 0.0).unwrap(), 0.01005);
    assert!((lr_at(&cyclical(CycleForm::AsPaper), PI * 7.0).unwrap() - 5e-5).abs() < 1e-18);
    let steps = ScheduleSpec::Stepwise {
        initial_lr: 0.1,
        change: StepChange::Factor(0.5),
        boundaries: vec![10.0, 20.0],
    };
    assert_eq!(lr_at(&steps, 9.0).unwrap(), 0.1);
    assert_eq!(lr_at(&steps, 10.0).unwrap(), 0.05);
    assert_eq!(lr_at(&steps, 25.0).unwrap(), 0.025);
}

#[test]
fn exponential_decreases_strictly() {
    let exp = ScheduleSpec::Exponential {
        initial_lr: 0.1,
        decay_rate: 0.9,
        decay_step: 3.0,
    };
    let values: Vec<f64> = (0..50).map(|s| lr_at(&exp, s as f64).unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn cyclical_period_is_two_pi_stepsize() {
    let spec = cyclical(CycleForm::AsPaper);
    let period = 2.0 * PI * 7.0;
    for k in 0..200 {
        let s = k as f64 * 0.37;
        let a = lr_at(&spec, s).unwrap();
        let b = lr_at(&spec, s + period).unwrap();
        assert!((a - b).abs() <= 1e-12, "step {s}: {a} vs {b}");
    }
}

#[test]
fn triangular_form_oscillates_between_bounds() {
    let spec = cyclical(CycleForm::Triangular);
    assert_eq!(lr_at(&spec, 0.0).unwrap(), 1e-4);
    assert!((lr_at(&spec, 7.0).unwrap() - 1e-2).abs() < 1e-15);
    assert!((lr_at(&spec, 14.0).unwrap() - 1e-4).abs() < 1e-15);
    for k in 0..500 {
        let v = lr_at(&spec, k as f64 * 0.1).unwrap();
        assert!((1e-4..=1e-2 + 1e-15).contains(&v));
    }
}

#[test]
fn lr_find_picks_the_planted_steepest_point() {
    let grid = geometric_grid(1e-6, 1e-1, 21).unwrap();
    let step = (grid[1] / grid[0]).ln();
    for planted in [4usize, 9, 13] {
        // loss falls fastest at the planted grid point, symmetrically on
        // both sides, so smoothing keeps the steepest point in place
        let centre = grid[planted].ln();
        let probe = move |lr: f64| 2.0 - ((lr.ln() - centre) / (2.0 * step)).tanh();
        let found = lr_find(&probe, &grid).unwrap();
        assert_eq!(found.index, planted);
        assert_eq!(found.lr, grid[planted]);
        assert!(!found.flat);
    }
}

#[test]
fn lr_find_ignores_points_after_divergence() {
    let grid = geometric_grid(1e-5, 1e-1, 12).unwrap();
    let cut = grid[8];
    let probe = move |lr: f64| {
        if lr >= cut {
            f64::NAN
        } else {
            -lr.ln() * 1e-3 + 1.0 / (1.0 + 1e4 * lr)
        }
    };
    let found = lr_find(&probe, &grid).unwrap();
    assert_eq!(found.slopes.len(), 8);
    assert!(found.index < 8);
    assert_eq!(found.trace.len(), 12);
    assert!(found.trace[8].1.is_nan());
}

#[test]
fn lr_find_is_deterministic() {
    let grid = geometric_grid(1e-4, 1.0, 15).unwrap();
    let probe = |lr: f64| (lr.ln() + 4.0).powi(2).sin() + 0.1 * lr;
    assert_eq!(lr_find(&probe, &grid).unwrap(), lr_find(&probe, &grid).unwrap());
}
