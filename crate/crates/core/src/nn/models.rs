use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::graph::{Evaluation, GraphBuilder, LayerSpec, ModelGraph};
use super::layers::{Activation, Padding};
use super::tensor::Tensor;
use super::weights::WeightStore;
use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::quat::Quaternion;

/// Axis input names, in window channel order.
pub const AXIS_INPUTS: [&str; 6] = ["gx", "gy", "gz", "ax", "ay", "az"];
pub const RATE_INPUT: &str = "rate";
/// Sampling rates enter the network in kHz.
pub const RATE_SCALE: f64 = 1000.0;
pub const MIN_WINDOW: usize = 12;
/// Pre-normalization norms below this give the identity and a flag.
pub const DEGENERATE_NORM: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    A,
    B,
}

impl ModelKind {
    pub fn build(self, n: usize) -> Result<ModelGraph> {
        match self {
            ModelKind::A => build_model_a(n),
            ModelKind::B => build_model_b(n),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "model-a" => Ok(ModelKind::A),
            "b" | "model-b" => Ok(ModelKind::B),
            _ => Err(Error::Unknown {
                what: "model",
                name: s.into(),
            }),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::A => "a",
            ModelKind::B => "b",
        })
    }
}

/// Per-axis conv + pool feature extractors, a causal fusion conv, a dense
/// layer and a BiLSTM, joined with the flattened fusion features and a
/// sampling-rate branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelAConfig {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub dense_units: usize,
    pub lstm_units: usize,
    pub rate_units: usize,
    pub dropout: f64,
    pub input_noise: f64,
}

impl Default for ModelAConfig {
    fn default() -> Self {
        ModelAConfig {
            filters: 128,
            kernel: 11,
            pool: 3,
            dense_units: 512,
            lstm_units: 128,
            rate_units: 512,
            dropout: 0.2,
            input_noise: 0.01,
        }
    }
}

/// Stacked LSTMs over the six channels, a dense layer and a sampling-rate
/// branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBConfig {
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub input_noise: f64,
}

impl Default for ModelBConfig {
    fn default() -> Self {
        ModelBConfig {
            lstm_units: 50,
            dense_units: 256,
            dropout: 0.25,
            input_noise: 0.01,
        }
    }
}

impl ModelBConfig {
    /// Four LSTM units and eight dense units; small enough for the
    /// finite-difference trainer.
    pub fn micro() -> Self {
        ModelBConfig {
            lstm_units: 4,
            dense_units: 8,
            ..Self::default()
        }
    }
}

fn check_window(n: usize) -> Result<()> {
    if n < MIN_WINDOW || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "window length must be even and >= {MIN_WINDOW}, got {n}"
        )));
    }
    Ok(())
}

pub fn build_model_a(n: usize) -> Result<ModelGraph> {
    build_model_a_with(n, &ModelAConfig::default())
}

pub fn build_model_a_with(n: usize, cfg: &ModelAConfig) -> Result<ModelGraph> {
    check_window(n)?;
    if n / cfg.pool.max(1) == 0 {
        return Err(Error::invalid(format!("window {n} too short for pool {}", cfg.pool)));
    }
    let mut g = GraphBuilder::new();
    let mut branches = Vec::new();
    for axis in AXIS_INPUTS {
        let x = g.input(axis, &[1, n]);
        let x = g.add(
            &format!("{axis}_noise"),
            LayerSpec::GaussianNoise {
                stddev: cfg.input_noise,
            },
            &[&x],
        );
        let x = g.add(
            &format!("{axis}_conv"),
            LayerSpec::Conv1d {
                filters: cfg.filters,
                kernel: cfg.kernel,
                stride: 1,
                padding: Padding::Causal,
                activation: Activation::Mish,
            },
            &[&x],
        );
        let x = g.add(&format!("{axis}_pool"), LayerSpec::Maxpool1d { size: cfg.pool }, &[&x]);
        let x = g.add(
            &format!("{axis}_dropout"),
            LayerSpec::Dropout { rate: cfg.dropout },
            &[&x],
        );
        branches.push(x);
    }
    let refs: Vec<&str> = branches.iter().map(String::as_str).collect();
    let joined = g.add("axes", LayerSpec::Concat { axis: 0 }, &refs);
    let fused = g.add(
        "fusion_conv",
        LayerSpec::Conv1d {
            filters: cfg.filters,
            kernel: cfg.kernel,
            stride: 1,
            padding: Padding::Causal,
            activation: Activation::Mish,
        },
        &[&joined],
    );
    let fused = g.add("fusion_dropout", LayerSpec::Dropout { rate: cfg.dropout }, &[&fused]);
    let seq = g.add("fusion_seq", LayerSpec::Transpose, &[&fused]);
    let seq = g.add(
        "fusion_dense",
        LayerSpec::Dense {
            units: cfg.dense_units,
            activation: Activation::Relu,
        },
        &[&seq],
    );
    let temporal = g.add(
        "bilstm",
        LayerSpec::Bilstm {
            units: cfg.lstm_units,
            return_sequences: false,
        },
        &[&seq],
    );
    let temporal = g.add("bilstm_dropout", LayerSpec::Dropout { rate: cfg.dropout }, &[&temporal]);
    let flat = g.add("fusion_flat", LayerSpec::Flatten, &[&fused]);
    let rate = g.input(RATE_INPUT, &[1]);
    let rate = g.add(
        "rate_dense",
        LayerSpec::Dense {
            units: cfg.rate_units,
            activation: Activation::Relu,
        },
        &[&rate],
    );
    let all = g.add("features", LayerSpec::Concat { axis: 0 }, &[&temporal, &flat, &rate]);
    let head = g.add(
        "head",
        LayerSpec::Dense {
            units: 4,
            activation: Activation::Linear,
        },
        &[&all],
    );
    let out = g.add("unit_scale", LayerSpec::UnitScale, &[&head]);
    g.finish(&out)
}

pub fn build_model_b(n: usize) -> Result<ModelGraph> {
    build_model_b_with(n, &ModelBConfig::default())
}

pub fn build_model_b_with(n: usize, cfg: &ModelBConfig) -> Result<ModelGraph> {
    check_window(n)?;
    let mut g = GraphBuilder::new();
    let mut axes = Vec::new();
    for axis in AXIS_INPUTS {
        axes.push(g.input(axis, &[1, n]));
    }
    let refs: Vec<&str> = axes.iter().map(String::as_str).collect();
    let x = g.add("channels", LayerSpec::Concat { axis: 0 }, &refs);
    let x = g.add(
        "noise",
        LayerSpec::GaussianNoise {
            stddev: cfg.input_noise,
        },
        &[&x],
    );
    let x = g.add("seq", LayerSpec::Transpose, &[&x]);
    let x = g.add(
        "lstm_1",
        LayerSpec::Lstm {
            units: cfg.lstm_units,
            return_sequences: true,
        },
        &[&x],
    );
    let x = g.add("dropout_1", LayerSpec::Dropout { rate: cfg.dropout }, &[&x]);
    let x = g.add(
        "lstm_2",
        LayerSpec::Lstm {
            units: cfg.lstm_units,
            return_sequences: false,
        },
        &[&x],
    );
    let x = g.add("dropout_2", LayerSpec::Dropout { rate: cfg.dropout }, &[&x]);
    let x = g.add(
        "dense",
        LayerSpec::Dense {
            units: cfg.dense_units,
            activation: Activation::Relu,
        },
        &[&x],
    );
    let rate = g.input(RATE_INPUT, &[1]);
    let rate = g.add(
        "rate_dense",
        LayerSpec::Dense {
            units: cfg.dense_units,
            activation: Activation::Relu,
        },
        &[&rate],
    );
    let all = g.add("features", LayerSpec::Concat { axis: 0 }, &[&x, &rate]);
    let head = g.add(
        "head",
        LayerSpec::Dense {
            units: 4,
            activation: Activation::Linear,
        },
        &[&all],
    );
    let out = g.add("unit_scale", LayerSpec::UnitScale, &[&head]);
    g.finish(&out)
}

/// Graph inputs for one window.
pub fn window_inputs(window: &Window) -> Result<BTreeMap<String, Tensor>> {
    let mut inputs = BTreeMap::new();
    for (c, name) in AXIS_INPUTS.iter().enumerate() {
        inputs.insert(
            (*name).to_owned(),
            Tensor::from_f64(vec![1, window.n], window.channel(c))?,
        );
    }
    inputs.insert(
        RATE_INPUT.to_owned(),
        Tensor::vector(vec![(window.rate_hz / RATE_SCALE) as f32]),
    );
    Ok(inputs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub q: Quaternion,
    /// The raw output was too small to normalize; `q` is the identity.
    pub degenerate: bool,
}

/// Evaluates a graph whose output is a unit-scaled 4-vector and returns it
/// as a unit quaternion, normalized in `f64`.
pub fn forward(graph: &ModelGraph, weights: &WeightStore, window: &Window) -> Result<Estimate> {
    weights.check(graph, true)?;
    forward_unchecked(graph, weights, window)
}

pub(crate) fn forward_unchecked(graph: &ModelGraph, weights: &WeightStore, window: &Window) -> Result<Estimate> {
    estimate(graph, weights, &window_inputs(window)?)
}

pub(crate) fn estimate(
    graph: &ModelGraph,
    weights: &WeightStore,
    inputs: &BTreeMap<String, Tensor>,
) -> Result<Estimate> {
    Ok(estimate_from(graph.evaluate(weights, inputs)?))
}

pub(crate) fn estimate_from(eval: Evaluation) -> Estimate {
    let raw: Vec<f64> = match eval.pre_unit {
        Some(v) => v,
        None => eval.output.data().iter().map(|&v| v as f64).collect(),
    };
    let q = Quaternion::new(raw[0], raw[1], raw[2], raw[3]);
    let norm = q.norm();
    if !(norm >= DEGENERATE_NORM) {
        return Estimate {
            q: Quaternion::IDENTITY,
            degenerate: true,
        };
    }
    Estimate {
        q: q.scale(1.0 / norm),
        degenerate: false,
    }
}

/// A graph with weights checked against it once.
#[derive(Clone, Debug)]
pub struct Model {
    graph: ModelGraph,
    weights: WeightStore,
}

impl Model {
    pub fn new(graph: ModelGraph, weights: WeightStore) -> Result<Self> {
        weights.check(&graph, false)?;
        Ok(Model { graph, weights })
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn forward(&self, window: &Window) -> Result<Estimate> {
        forward_unchecked(&self.graph, &self.weights, window)
    }
}
