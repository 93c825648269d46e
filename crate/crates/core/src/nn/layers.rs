//! Inference kernels. Inputs are stored as `f32`; every sum is carried in
//! `f64`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// `K−1` zeros on the left: output `t` sees inputs `≤ t` only.
    #[default]
    Causal,
    /// `(K−1)/2` zeros on the left, the rest on the right.
    Same,
}

impl Padding {
    fn left(self, kernel: usize) -> usize {
        match self {
            Padding::Causal => kernel - 1,
            Padding::Same => (kernel - 1) / 2,
        }
    }
}

/// Elementwise activations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Linear,
    Sigmoid,
    Relu,
    Tanh,
    LeakyRelu {
        alpha: f64,
    },
    Elu {
        alpha: f64,
    },
    Swish {
        beta: f64,
    },
    /// Randomized leaky ReLU; at inference the slope is the midpoint of
    /// `[lower, upper]`.
    Rrelu {
        lower: f64,
        upper: f64,
    },
    Mish,
}

impl Activation {
    pub const LEAKY_RELU: Activation = Activation::LeakyRelu { alpha: 0.01 };
    pub const ELU: Activation = Activation::Elu { alpha: 1.0 };
    pub const SWISH: Activation = Activation::Swish { beta: 1.0 };
    pub const RRELU: Activation = Activation::Rrelu {
        lower: 1.0 / 8.0,
        upper: 1.0 / 3.0,
    };

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::LeakyRelu { .. } => "leaky-relu",
            Activation::Elu { .. } => "elu",
            Activation::Swish { .. } => "swish",
            Activation::Rrelu { .. } => "rrelu",
            Activation::Mish => "mish",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu { alpha } => {
                if x >= 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Elu { alpha } => {
                if x >= 0.0 {
                    x
                } else {
                    alpha * x.exp_m1()
                }
            }
            Activation::Swish { beta } => x * sigmoid(beta * x),
            Activation::Rrelu { lower, upper } => {
                if x >= 0.0 {
                    x
                } else {
                    0.5 * (lower + upper) * x
                }
            }
            Activation::Mish => x * softplus(x).tanh(),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "linear" | "identity" => Activation::Linear,
            "sigmoid" => Activation::Sigmoid,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "leaky-relu" | "leakyrelu" => Activation::LEAKY_RELU,
            "elu" => Activation::ELU,
            "swish" => Activation::SWISH,
            "rrelu" => Activation::RRELU,
            "mish" => Activation::Mish,
            _ => {
                return Err(Error::Unknown {
                    what: "activation",
                    name: s.into(),
                })
            }
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn activation(x: &Tensor, act: Activation) -> Tensor {
    x.map(|v| act.apply(v))
}

fn mismatch(msg: String) -> Error {
    Error::ShapeMismatch(msg)
}

/// Cross-correlation of `x: [C_in, T]` with `kernel: [C_out, C_in, K]`,
/// giving `[C_out, ceil(T/stride)]`.
pub fn conv1d(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, padding: Padding, stride: usize) -> Result<Tensor> {
    let (c_in, t_len) = x.dims2()?;
    let &[c_out, kc_in, k] = kernel.shape() else {
        return Err(mismatch(format!(
            "conv kernel must be rank 3, got {:?}",
            kernel.shape()
        )));
    };
    if kc_in != c_in || k == 0 || stride == 0 {
        return Err(mismatch(format!(
            "conv kernel {:?} does not fit input {:?} (stride {stride})",
            kernel.shape(),
            x.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(mismatch(format!("conv bias {:?}, expected [{c_out}]", b.shape())));
        }
    }
    let left = padding.left(k);
    let out_len = t_len.div_ceil(stride);
    let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let ws = kernel.data();
    let mut out = vec![0.0f32; c_out * out_len];
    let mut acc = vec![0.0f64; out_len];
    for o in 0..c_out {
        acc.fill(bias.map_or(0.0, |b| b.data()[o] as f64));
        for c in 0..c_in {
            let wrow = &ws[(o * c_in + c) * k..(o * c_in + c + 1) * k];
            let xrow = &xs[c * t_len..(c + 1) * t_len];
            for (j, &w) in wrow.iter().enumerate() {
                // output t reads frame t*stride + j - left
                let first = left.saturating_sub(j).div_ceil(stride);
                let Some(last_frame) = (t_len + left).checked_sub(j + 1) else {
                    continue;
                };
                let end = (last_frame / stride + 1).min(out_len);
                if first >= end {
                    continue;
                }
                let w = w as f64;
                let base = first * stride + j - left;
                if stride == 1 {
                    let src = &xrow[base..base + (end - first)];
                    for (a, &xv) in acc[first..end].iter_mut().zip(src) {
                        *a += w * xv;
                    }
                } else {
                    for (n, a) in acc[first..end].iter_mut().enumerate() {
                        *a += w * xrow[base + n * stride];
                    }
                }
            }
        }
        for (dst, &a) in out[o * out_len..(o + 1) * out_len].iter_mut().zip(&acc) {
            *dst = a as f32;
        }
    }
    Tensor::new(vec![c_out, out_len], out)
}

/// Non-overlapping max over `size` frames of `x: [C, T]`; a trailing
/// partial window is dropped.
pub fn maxpool1d(x: &Tensor, size: usize) -> Result<Tensor> {
    if size == 0 {
        return Err(Error::invalid("pool size must be >= 1"));
    }
    let (c, t_len) = x.dims2()?;
    let out_len = t_len / size;
    let mut out = Vec::with_capacity(c * out_len);
    for ch in 0..c {
        let row = &x.data()[ch * t_len..(ch + 1) * t_len];
        for w in row.chunks_exact(size) {
            out.push(w.iter().copied().fold(f32::NEG_INFINITY, f32::max));
        }
    }
    Tensor::new(vec![c, out_len], out)
}

/// `x · kernel + bias` along the last axis; `kernel: [in, out]`.
pub fn dense(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n_in, n_out) = kernel.dims2()?;
    let last = *x
        .shape()
        .last()
        .ok_or_else(|| mismatch("dense input is a scalar".into()))?;
    if last != n_in {
        return Err(mismatch(format!(
            "dense kernel {:?} does not fit input {:?}",
            kernel.shape(),
            x.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [n_out] {
            return Err(mismatch(format!("dense bias {:?}, expected [{n_out}]", b.shape())));
        }
    }
    let rows = x.len() / n_in;
    let ws = kernel.data();
    let mut out = vec![0.0f32; rows * n_out];
    let mut acc = vec![0.0f64; n_out];
    for r in 0..rows {
        match bias {
            Some(b) => acc.iter_mut().zip(b.data()).for_each(|(a, &v)| *a = v as f64),
            None => acc.fill(0.0),
        }
        for (i, &xv) in x.data()[r * n_in..(r + 1) * n_in].iter().enumerate() {
            let xv = xv as f64;
            for (a, &w) in acc.iter_mut().zip(&ws[i * n_out..(i + 1) * n_out]) {
                *a += xv * w as f64;
            }
        }
        for (o, a) in out[r * n_out..(r + 1) * n_out].iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("non-scalar") = n_out;
    Tensor::new(shape, out)
}

/// LSTM parameters with gate blocks ordered input, forget, candidate,
/// output along the last axis.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'a> {
    /// `[D, 4u]`
    pub kernel: &'a Tensor,
    /// `[u, 4u]`
    pub recurrent: &'a Tensor,
    /// `[4u]`
    pub bias: &'a Tensor,
}

impl LstmWeights<'_> {
    fn units(&self, input_dim: usize) -> Result<usize> {
        let (d, g) = self.kernel.dims2()?;
        let u = g / 4;
        if d != input_dim || g % 4 != 0 || self.recurrent.shape() != [u, 4 * u] || self.bias.shape() != [4 * u] {
            return Err(mismatch(format!(
                "lstm weights kernel {:?}, recurrent {:?}, bias {:?} do not fit input dim {input_dim}",
                self.kernel.shape(),
                self.recurrent.shape(),
                self.bias.shape()
            )));
        }
        Ok(u)
    }
}

/// Parameter count of one LSTM direction.
pub fn lstm_param_count(input_dim: usize, units: usize) -> usize {
    4 * (units * input_dim + units * units + units)
}

/// Full hidden sequence `[T, u]` for `x: [T, D]`, zero initial state.
pub fn lstm(x: &Tensor, w: LstmWeights<'_>) -> Result<Tensor> {
    let (t_len, d) = x.dims2()?;
    let u = w.units(d)?;
    let (k, r, b) = (w.kernel.data(), w.recurrent.data(), w.bias.data());
    let mut h = vec![0.0f64; u];
    let mut c = vec![0.0f64; u];
    let mut z = vec![0.0f64; 4 * u];
    let mut out = Vec::with_capacity(t_len * u);
    for t in 0..t_len {
        z.iter_mut().zip(b).for_each(|(zv, &bv)| *zv = bv as f64);
        for (i, &xv) in x.data()[t * d..(t + 1) * d].iter().enumerate() {
            let xv = xv as f64;
            for (zv, &kv) in z.iter_mut().zip(&k[i * 4 * u..(i + 1) * 4 * u]) {
                *zv += xv * kv as f64;
            }
        }
        for (j, &hv) in h.iter().enumerate() {
            for (zv, &rv) in z.iter_mut().zip(&r[j * 4 * u..(j + 1) * 4 * u]) {
                *zv += hv * rv as f64;
            }
        }
        for j in 0..u {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[u + j]);
            let g = z[2 * u + j].tanh();
            let o_g = sigmoid(z[3 * u + j]);
            c[j] = f_g * c[j] + i_g * g;
            h[j] = o_g * c[j].tanh();
        }
        out.extend(h.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![t_len, u], out)
}

fn reverse_time(x: &Tensor) -> Result<Tensor> {
    let (t_len, d) = x.dims2()?;
    let mut data = Vec::with_capacity(x.len());
    for t in (0..t_len).rev() {
        data.extend_from_slice(&x.data()[t * d..(t + 1) * d]);
    }
    Tensor::new(vec![t_len, d], data)
}

/// Forward LSTM and a time-reversed LSTM, concatenated per step: `[T, 2u]`.
pub fn bilstm(x: &Tensor, fwd: LstmWeights<'_>, bwd: LstmWeights<'_>) -> Result<Tensor> {
    let f = lstm(x, fwd)?;
    let b = reverse_time(&lstm(&reverse_time(x)?, bwd)?)?;
    concat(&[&f, &b], 1)
}

/// Joins tensors of equal rank along `axis`; all other dimensions must match.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| mismatch("concat of nothing".into()))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(mismatch(format!("concat axis {axis} out of range for rank {rank}")));
    }
    for p in parts {
        let ok = p.rank() == rank
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(mismatch(format!(
                "cannot concat {:?} with {:?} on axis {axis}",
                p.shape(),
                first.shape()
            )));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
    Tensor::new(shape, data)
}

/// Last row of a `[T, u]` sequence.
pub fn last_step(x: &Tensor) -> Result<Tensor> {
    let (t_len, u) = x.dims2()?;
    if t_len == 0 {
        return Err(mismatch("last step of an empty sequence".into()));
    }
    Ok(Tensor::vector(x.data()[(t_len - 1) * u..].to_vec()))
}

/// Divides by the Euclidean norm; returns the norm alongside. A zero vector
/// is returned unchanged.
pub fn unit_scale(x: &Tensor) -> (Tensor, f64) {
    let norm = x.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        (x.map(|v| v / norm), norm)
    } else {
        (x.clone(), norm)
    }
}
