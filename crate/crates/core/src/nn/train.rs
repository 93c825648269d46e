//! Plain gradient descent with central-difference gradients, for graphs
//! small enough that `2·params` forward passes per step are affordable.

use std::collections::BTreeMap;

use super::graph::ModelGraph;
use super::models::{estimate, estimate_from, window_inputs};
use super::tensor::Tensor;
use super::weights::WeightStore;
use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::loss::{pair_loss, LossKind};
use crate::quat::Quaternion;
use crate::sched::{lr_at, LrProbe, ScheduleSpec};

pub const DEFAULT_PARAM_CAP: usize = 2000;
pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub steps: usize,
    pub schedule: ScheduleSpec,
    pub fd_step: f64,
    pub param_cap: usize,
}

impl TrainConfig {
    pub fn new(loss: LossKind, steps: usize, schedule: ScheduleSpec) -> Self {
        TrainConfig {
            loss,
            steps,
            schedule,
            fd_step: DEFAULT_FD_STEP,
            param_cap: DEFAULT_PARAM_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: WeightStore,
    /// Batch loss before each step and after the last one. Ends early at
    /// the first non-finite value.
    pub trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("trace has the initial loss")
    }
}

struct Batch<'a> {
    graph: &'a ModelGraph,
    inputs: Vec<BTreeMap<String, Tensor>>,
    targets: Vec<Quaternion>,
    loss: LossKind,
}

impl<'a> Batch<'a> {
    fn new(graph: &'a ModelGraph, windows: &'a [Window], loss: LossKind) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        let targets = windows
            .iter()
            .map(|w| {
                w.target
                    .ok_or_else(|| Error::invalid("training window without a target"))
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs = windows.iter().map(window_inputs).collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            graph,
            inputs,
            targets,
            loss,
        })
    }

    fn loss(&self, weights: &WeightStore) -> Result<f64> {
        let mut sum = 0.0;
        for (inputs, &target) in self.inputs.iter().zip(&self.targets) {
            let est = estimate(self.graph, weights, inputs)?;
            sum += pair_loss(self.loss, target, est.q);
        }
        Ok(sum / self.inputs.len() as f64)
    }

    fn node_values(&self, weights: &WeightStore) -> Result<Vec<Vec<Tensor>>> {
        self.inputs.iter().map(|i| self.graph.node_values(weights, i)).collect()
    }

    /// Batch loss recomputing only nodes from `start` on.
    fn loss_from(&self, weights: &WeightStore, cached: &[Vec<Tensor>], start: usize) -> Result<f64> {
        let mut sum = 0.0;
        for ((inputs, values), &target) in self.inputs.iter().zip(cached).zip(&self.targets) {
            let est = estimate_from(self.graph.evaluate_from(weights, inputs, values, start)?);
            sum += pair_loss(self.loss, target, est.q);
        }
        Ok(sum / self.inputs.len() as f64)
    }
}

/// Trains `weights` on windows carrying targets.
pub fn toy_train(
    graph: &ModelGraph,
    weights: &WeightStore,
    windows: &[Window],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = graph.param_count();
    if params > config.param_cap {
        return Err(Error::UnsupportedScale {
            params,
            cap: config.param_cap,
        });
    }
    if !(config.fd_step > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {}",
            config.fd_step
        )));
    }
    config.schedule.validate()?;
    weights.check(graph, false)?;
    let batch = Batch::new(graph, windows, config.loss)?;
    let mut w = weights.clone();
    let mut trace = Vec::with_capacity(config.steps + 1);
    for step in 0..config.steps {
        let loss = batch.loss(&w)?;
        trace.push(loss);
        if !loss.is_finite() {
            return Ok(TrainOutcome { weights: w, trace });
        }
        let lr = lr_at(&config.schedule, step as f64)?;
        let grads = gradient(&batch, &mut w, config.fd_step)?;
        if lr != 0.0 {
            apply(&mut w, &grads, lr);
        }
    }
    trace.push(batch.loss(&w)?);
    Ok(TrainOutcome { weights: w, trace })
}

fn gradient(batch: &Batch<'_>, w: &mut WeightStore, h: f64) -> Result<BTreeMap<String, Vec<f64>>> {
    let cached = batch.node_values(w)?;
    let names: Vec<String> = w.names().map(str::to_owned).collect();
    let mut grads = BTreeMap::new();
    for name in names {
        let start = batch.graph.param_node(&name).unwrap_or(0);
        let len = w.get(&name).expect("listed").len();
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = w.get(&name).expect("listed").data()[i];
            let plus = (orig as f64 + h) as f32;
            let minus = (orig as f64 - h) as f32;
            set(w, &name, i, plus);
            let lp = batch.loss_from(w, &cached, start)?;
            set(w, &name, i, minus);
            let lm = batch.loss_from(w, &cached, start)?;
            set(w, &name, i, orig);
            *gi = (lp - lm) / (plus as f64 - minus as f64);
        }
        grads.insert(name, g);
    }
    Ok(grads)
}

fn set(w: &mut WeightStore, name: &str, i: usize, v: f32) {
    w.get_mut(name).expect("listed").data_mut()[i] = v;
}

fn apply(w: &mut WeightStore, grads: &BTreeMap<String, Vec<f64>>, lr: f64) {
    for (name, t) in w.iter_mut() {
        let g = &grads[name];
        for (v, gi) in t.data_mut().iter_mut().zip(g) {
            *v = (*v as f64 - lr * gi) as f32;
        }
    }
}

/// Short constant-rate training runs from one weight snapshot, for the
/// learning-rate finder.
pub struct ToyProbe<'a> {
    pub graph: &'a ModelGraph,
    pub weights: &'a WeightStore,
    pub windows: &'a [Window],
    pub loss: LossKind,
    pub probe_steps: usize,
}

impl LrProbe for ToyProbe<'_> {
    fn probe(&self, lr: f64) -> f64 {
        let config = TrainConfig::new(self.loss, self.probe_steps, ScheduleSpec::constant(lr));
        match toy_train(self.graph, self.weights, self.windows, &config) {
            Ok(out) => out.final_loss(),
            Err(_) => f64::NAN,
        }
    }
}

/// Windows from static, noise-free tilts: gravity along `Rᵀẑ`, zero rates,
/// target the tilt itself.
pub fn synthetic_tilt_windows(count: usize, n: usize, rate_hz: f64, gravity: f64) -> Result<Vec<Window>> {
    use crate::quat::{EulerAngles, Vec3};
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let u = k as f64 / count.max(1) as f64;
        let roll = 0.6 * (2.0 * std::f64::consts::PI * u).sin();
        let pitch = 0.4 * (2.0 * std::f64::consts::PI * u).cos();
        let q = Quaternion::from_euler(EulerAngles::new(roll, pitch, 0.0));
        let a = q.inverse_rotate(Vec3::new(0.0, 0.0, gravity));
        let mut data = vec![0.0; 6 * n];
        for c in 0..3 {
            data[(c + 3) * n..(c + 4) * n].fill(a[c]);
        }
        out.push(Window {
            start: 0,
            center: n / 2,
            n,
            data,
            rate_hz,
            t_center: 0.0,
            target: Some(q),
        });
    }
    Ok(out)
}
