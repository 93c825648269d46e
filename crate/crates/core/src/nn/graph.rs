use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layers::{self, Activation, LstmWeights, Padding};
use super::tensor::Tensor;
use super::weights::WeightStore;
use crate::error::{Error, Result};

/// One node's operation. Dropout and Gaussian noise are identity at
/// inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Input {
        shape: Vec<usize>,
    },
    /// `[C_in, T] -> [filters, ceil(T/stride)]`
    Conv1d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        activation: Activation,
    },
    /// `[C, T] -> [C, T/size]`
    Maxpool1d {
        size: usize,
    },
    /// Acts on the last axis.
    Dense {
        units: usize,
        activation: Activation,
    },
    /// `[T, D] -> [T, u]` or `[u]`
    Lstm {
        units: usize,
        return_sequences: bool,
    },
    /// `[T, D] -> [T, 2u]` or `[2u]`
    Bilstm {
        units: usize,
        return_sequences: bool,
    },
    Concat {
        axis: usize,
    },
    Activation {
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    GaussianNoise {
        stddev: f64,
    },
    Transpose,
    Flatten,
    UnitScale,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Input { .. } => "input",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Maxpool1d { .. } => "maxpool1d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Bilstm { .. } => "bilstm",
            LayerSpec::Concat { .. } => "concat",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::GaussianNoise { .. } => "gaussian_noise",
            LayerSpec::Transpose => "transpose",
            LayerSpec::Flatten => "flatten",
            LayerSpec::UnitScale => "unit_scale",
        }
    }

    fn check_params(&self) -> Result<()> {
        let positive = |what: &str, v: usize| {
            if v == 0 {
                Err(Error::Graph(format!("{} needs {what} >= 1", self.kind())))
            } else {
                Ok(())
            }
        };
        match self {
            LayerSpec::Conv1d {
                filters,
                kernel,
                stride,
                ..
            } => {
                positive("filters", *filters)?;
                positive("kernel", *kernel)?;
                positive("stride", *stride)
            }
            LayerSpec::Maxpool1d { size } => positive("size", *size),
            LayerSpec::Dense { units, .. } | LayerSpec::Lstm { units, .. } | LayerSpec::Bilstm { units, .. } => {
                positive("units", *units)
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(rate) => {
                Err(Error::Graph(format!("dropout rate {rate} outside [0, 1)")))
            }
            LayerSpec::GaussianNoise { stddev } if !(*stddev >= 0.0) => {
                Err(Error::Graph(format!("noise stddev {stddev} must be >= 0")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub layer: LayerSpec,
    pub inputs: Vec<String>,
}

/// A parameter tensor the graph expects in its weight store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn count(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Nodes in evaluation order; every edge points to an earlier node, so the
/// graph is acyclic by construction. Shapes are checked when the graph is
/// finished.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    nodes: Vec<Node>,
    output: String,
    shapes: BTreeMap<String, Vec<usize>>,
    wiring: Vec<Wiring>,
}

/// Per-node input positions and parameter names, resolved once.
#[derive(Clone, Debug, PartialEq)]
struct Wiring {
    inputs: Vec<usize>,
    params: Vec<String>,
}

/// Incremental graph construction.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> String {
        self.add(name, LayerSpec::Input { shape: shape.to_vec() }, &[])
    }

    pub fn add(&mut self, name: &str, layer: LayerSpec, inputs: &[&str]) -> String {
        self.nodes.push(Node {
            name: name.to_owned(),
            layer,
            inputs: inputs.iter().map(|s| (*s).to_owned()).collect(),
        });
        name.to_owned()
    }

    pub fn finish(self, output: &str) -> Result<ModelGraph> {
        ModelGraph::new(self.nodes, output)
    }
}

fn lstm_params(prefix: &str, d: usize, u: usize) -> [ParamSpec; 3] {
    [
        ParamSpec {
            name: format!("{prefix}/kernel"),
            shape: vec![d, 4 * u],
        },
        ParamSpec {
            name: format!("{prefix}/recurrent_kernel"),
            shape: vec![u, 4 * u],
        },
        ParamSpec {
            name: format!("{prefix}/bias"),
            shape: vec![4 * u],
        },
    ]
}

fn out_shape(node: &Node, ins: &[&Vec<usize>]) -> Result<Vec<usize>> {
    let fail = |msg: String| Err(Error::Graph(format!("node `{}`: {msg}", node.name)));
    let arity = match node.layer {
        LayerSpec::Input { .. } => 0,
        LayerSpec::Concat { .. } => usize::MAX,
        _ => 1,
    };
    if arity == usize::MAX {
        if ins.is_empty() {
            return fail("concat without inputs".into());
        }
    } else if ins.len() != arity {
        return fail(format!("expects {arity} inputs, got {}", ins.len()));
    }
    let rank2 = |s: &Vec<usize>| -> Result<(usize, usize)> {
        match s[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::Graph(format!(
                "node `{}`: needs a rank-2 input, got {s:?}",
                node.name
            ))),
        }
    };
    Ok(match &node.layer {
        LayerSpec::Input { shape } => shape.clone(),
        LayerSpec::Conv1d { filters, stride, .. } => {
            let (_, t) = rank2(ins[0])?;
            vec![*filters, t.div_ceil(*stride)]
        }
        LayerSpec::Maxpool1d { size } => {
            let (c, t) = rank2(ins[0])?;
            if t / size == 0 {
                return fail(format!("sequence of {t} frames is shorter than pool size {size}"));
            }
            vec![c, t / size]
        }
        LayerSpec::Dense { units, .. } => {
            let mut s = ins[0].clone();
            match s.last_mut() {
                Some(last) => *last = *units,
                None => return fail("dense on a scalar".into()),
            }
            s
        }
        LayerSpec::Lstm {
            units,
            return_sequences,
        } => {
            let (t, _) = rank2(ins[0])?;
            if t == 0 {
                return fail("empty sequence".into());
            }
            if *return_sequences {
                vec![t, *units]
            } else {
                vec![*units]
            }
        }
        LayerSpec::Bilstm {
            units,
            return_sequences,
        } => {
            let (t, _) = rank2(ins[0])?;
            if t == 0 {
                return fail("empty sequence".into());
            }
            if *return_sequences {
                vec![t, 2 * units]
            } else {
                vec![2 * units]
            }
        }
        LayerSpec::Concat { axis } => {
            let first = ins[0];
            if *axis >= first.len() {
                return fail(format!("axis {axis} out of range for {first:?}"));
            }
            let mut s = first.clone();
            s[*axis] = 0;
            for x in ins {
                let ok = x.len() == first.len()
                    && x.iter()
                        .zip(first.iter())
                        .enumerate()
                        .all(|(i, (a, b))| i == *axis || a == b);
                if !ok {
                    return fail(format!("cannot concat {x:?} with {first:?}"));
                }
                s[*axis] += x[*axis];
            }
            s
        }
        LayerSpec::Transpose => {
            let (a, b) = rank2(ins[0])?;
            vec![b, a]
        }
        LayerSpec::Flatten => vec![ins[0].iter().product()],
        LayerSpec::UnitScale => {
            if ins[0].len() != 1 {
                return fail(format!("unit scale needs a vector, got {:?}", ins[0]));
            }
            ins[0].clone()
        }
        LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } | LayerSpec::GaussianNoise { .. } => ins[0].clone(),
    })
}

fn node_params(node: &Node, shapes: &BTreeMap<String, Vec<usize>>) -> Vec<ParamSpec> {
    let in_shape = node.inputs.first().map(|i| &shapes[i]);
    let p = |suffix: &str, shape: Vec<usize>| ParamSpec {
        name: format!("{}/{suffix}", node.name),
        shape,
    };
    match &node.layer {
        LayerSpec::Conv1d { filters, kernel, .. } => {
            let c_in = in_shape.expect("conv input")[0];
            vec![p("kernel", vec![*filters, c_in, *kernel]), p("bias", vec![*filters])]
        }
        LayerSpec::Dense { units, .. } => {
            let d = *in_shape.expect("dense input").last().expect("non-scalar");
            vec![p("kernel", vec![d, *units]), p("bias", vec![*units])]
        }
        LayerSpec::Lstm { units, .. } => {
            let d = in_shape.expect("lstm input")[1];
            lstm_params(&node.name, d, *units).into()
        }
        LayerSpec::Bilstm { units, .. } => {
            let d = in_shape.expect("bilstm input")[1];
            let mut out = Vec::from(lstm_params(&format!("{}/forward", node.name), d, *units));
            out.extend(lstm_params(&format!("{}/backward", node.name), d, *units));
            out
        }
        _ => Vec::new(),
    }
}

impl ModelGraph {
    pub fn new(nodes: Vec<Node>, output: &str) -> Result<Self> {
        let mut shapes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for node in &nodes {
            node.layer.check_params()?;
            if shapes.contains_key(&node.name) {
                return Err(Error::Graph(format!("duplicate node `{}`", node.name)));
            }
            let ins = node
                .inputs
                .iter()
                .map(|i| {
                    shapes
                        .get(i)
                        .ok_or_else(|| Error::Graph(format!("node `{}` reads undefined `{i}`", node.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            let s = out_shape(node, &ins)?;
            shapes.insert(node.name.clone(), s);
        }
        let out = shapes
            .get(output)
            .ok_or_else(|| Error::Graph(format!("output `{output}` is not a node")))?;
        if out != &[4] {
            return Err(Error::Graph(format!("output must be a 4-vector, got {out:?}")));
        }
        let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();
        let wiring = nodes
            .iter()
            .map(|n| Wiring {
                inputs: n.inputs.iter().map(|i| index[i.as_str()]).collect(),
                params: node_params(n, &shapes).into_iter().map(|p| p.name).collect(),
            })
            .collect();
        Ok(ModelGraph {
            nodes,
            output: output.to_owned(),
            shapes,
            wiring,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    pub fn shape_of(&self, node: &str) -> Option<&[usize]> {
        self.shapes.get(node).map(Vec::as_slice)
    }

    /// Input nodes and their shapes, in declaration order.
    pub fn inputs(&self) -> Vec<(&str, &[usize])> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.layer {
                LayerSpec::Input { shape } => Some((n.name.as_str(), shape.as_slice())),
                _ => None,
            })
            .collect()
    }

    pub fn params(&self) -> Vec<ParamSpec> {
        self.nodes.iter().flat_map(|n| node_params(n, &self.shapes)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(ParamSpec::count).sum()
    }

    /// Runs the graph on named inputs and returns the output node's value
    /// together with the value feeding the final unit scale, if any.
    pub fn evaluate(&self, weights: &WeightStore, inputs: &BTreeMap<String, Tensor>) -> Result<Evaluation> {
        self.evaluate_from(weights, inputs, &[], 0)
    }

    /// Every node's value, in node order.
    pub fn node_values(&self, weights: &WeightStore, inputs: &BTreeMap<String, Tensor>) -> Result<Vec<Tensor>> {
        let run = self.run(weights, inputs, &[], 0)?;
        Ok(run.slot.iter().map(|&i| run.store[i].clone().into_owned()).collect())
    }

    /// Like [`ModelGraph::evaluate`], taking the values of nodes before
    /// `start` from `cached` (as returned by [`ModelGraph::node_values`]).
    /// `start` may not lie past the output node.
    pub fn evaluate_from(
        &self,
        weights: &WeightStore,
        inputs: &BTreeMap<String, Tensor>,
        cached: &[Tensor],
        start: usize,
    ) -> Result<Evaluation> {
        let out = self
            .nodes
            .iter()
            .position(|n| n.name == self.output)
            .ok_or_else(|| Error::Graph("output not produced".into()))?;
        if start > out {
            return Err(Error::invalid(format!(
                "cannot resume past the output node ({start} > {out})"
            )));
        }
        let mut run = self.run(weights, inputs, cached, start)?;
        let output = run.store.swap_remove(run.slot[out]).into_owned();
        Ok(Evaluation {
            output,
            pre_unit: run.pre_unit,
        })
    }

    /// Index of the first node reading the named parameter.
    pub fn param_node(&self, name: &str) -> Option<usize> {
        self.wiring.iter().position(|w| w.params.iter().any(|p| p == name))
    }

    fn run<'a>(
        &'a self,
        weights: &'a WeightStore,
        inputs: &'a BTreeMap<String, Tensor>,
        cached: &'a [Tensor],
        start: usize,
    ) -> Result<Run<'a>> {
        if start > cached.len() || start > self.nodes.len() {
            return Err(Error::invalid(format!(
                "cannot resume at node {start} with {} cached values",
                cached.len()
            )));
        }
        // identity nodes share their input's slot
        let mut store: Vec<Cow<'a, Tensor>> = cached[..start].iter().map(Cow::Borrowed).collect();
        let mut slot: Vec<usize> = (0..start).collect();
        store.reserve(self.nodes.len() - start);
        let mut pre_unit = None;
        for (node, wiring) in self.nodes.iter().zip(&self.wiring).skip(start) {
            let arg = |i: usize| -> &Tensor { &store[slot[wiring.inputs[i]]] };
            let w = |i: usize| weights.get_checked(&wiring.params[i]);
            let value = match &node.layer {
                LayerSpec::Input { shape } => {
                    let x = inputs
                        .get(&node.name)
                        .ok_or_else(|| Error::Graph(format!("missing input `{}`", node.name)))?;
                    if x.shape() != shape.as_slice() {
                        return Err(Error::ShapeMismatch(format!(
                            "input `{}` has shape {:?}, expected {shape:?}",
                            node.name,
                            x.shape()
                        )));
                    }
                    Cow::Borrowed(x)
                }
                LayerSpec::Conv1d {
                    stride,
                    padding,
                    activation,
                    ..
                } => {
                    let y = layers::conv1d(arg(0), w(0)?, Some(w(1)?), *padding, *stride)?;
                    Cow::Owned(layers::activation(&y, *activation))
                }
                LayerSpec::Maxpool1d { size } => Cow::Owned(layers::maxpool1d(arg(0), *size)?),
                LayerSpec::Dense { activation, .. } => {
                    let y = layers::dense(arg(0), w(0)?, Some(w(1)?))?;
                    Cow::Owned(layers::activation(&y, *activation))
                }
                LayerSpec::Lstm { return_sequences, .. } => {
                    let lw = LstmWeights {
                        kernel: w(0)?,
                        recurrent: w(1)?,
                        bias: w(2)?,
                    };
                    let y = layers::lstm(arg(0), lw)?;
                    Cow::Owned(if *return_sequences { y } else { layers::last_step(&y)? })
                }
                LayerSpec::Bilstm { return_sequences, .. } => {
                    let fwd = LstmWeights {
                        kernel: w(0)?,
                        recurrent: w(1)?,
                        bias: w(2)?,
                    };
                    let bwd = LstmWeights {
                        kernel: w(3)?,
                        recurrent: w(4)?,
                        bias: w(5)?,
                    };
                    Cow::Owned(if *return_sequences {
                        layers::bilstm(arg(0), fwd, bwd)?
                    } else {
                        let x = arg(0);
                        let f = layers::last_step(&layers::lstm(x, fwd)?)?;
                        let rev = reverse_rows(x)?;
                        let b = layers::last_step(&layers::lstm(&rev, bwd)?)?;
                        layers::concat(&[&f, &b], 0)?
                    })
                }
                LayerSpec::Concat { axis } => {
                    let parts: Vec<&Tensor> = (0..wiring.inputs.len()).map(arg).collect();
                    Cow::Owned(layers::concat(&parts, *axis)?)
                }
                LayerSpec::Activation { activation } => Cow::Owned(layers::activation(arg(0), *activation)),
                LayerSpec::Dropout { .. } | LayerSpec::GaussianNoise { .. } => {
                    slot.push(slot[wiring.inputs[0]]);
                    continue;
                }
                LayerSpec::Transpose => Cow::Owned(arg(0).transpose()?),
                LayerSpec::Flatten => Cow::Owned(arg(0).flatten()),
                LayerSpec::UnitScale => {
                    let x = arg(0);
                    if node.name == self.output {
                        pre_unit = Some(x.data().iter().map(|&v| v as f64).collect());
                    }
                    Cow::Owned(layers::unit_scale(x).0)
                }
            };
            slot.push(store.len());
            store.push(value);
        }
        Ok(Run { store, slot, pre_unit })
    }
}

struct Run<'a> {
    store: Vec<Cow<'a, Tensor>>,
    slot: Vec<usize>,
    pre_unit: Option<Vec<f64>>,
}

fn reverse_rows(x: &Tensor) -> Result<Tensor> {
    let (t, d) = x.dims2()?;
    let mut data = Vec::with_capacity(x.len());
    for r in (0..t).rev() {
        data.extend_from_slice(&x.data()[r * d..(r + 1) * d]);
    }
    Tensor::new(vec![t, d], data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub output: Tensor,
    /// Input of the output unit-scale node, in `f64`.
    pub pre_unit: Option<Vec<f64>>,
}
