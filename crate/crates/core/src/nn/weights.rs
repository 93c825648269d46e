use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::ModelGraph;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    shape: Vec<usize>,
    data_b64_le_f32: String,
}

#[derive(Serialize, Deserialize)]
struct StoreJson {
    format_version: u32,
    tensors: BTreeMap<String, TensorJson>,
}

fn weight_err(name: &str, message: impl Into<String>) -> Error {
    Error::Weights {
        name: name.to_owned(),
        message: message.into(),
    }
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// All-zero parameters for `graph`.
    pub fn zeros(graph: &ModelGraph) -> Self {
        let tensors = graph
            .params()
            .into_iter()
            .map(|p| (p.name, Tensor::zeros(&p.shape)))
            .collect();
        WeightStore { tensors }
    }

    /// Glorot-uniform kernels, zero biases and a forget-gate bias of 1.
    pub fn init(graph: &ModelGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for p in graph.params() {
            let n = p.count();
            let data = if p.name.ends_with("/bias") {
                let mut b = vec![0.0f32; n];
                if p.shape.len() == 1 && is_lstm_bias(graph, &p.name) {
                    let u = n / 4;
                    b[u..2 * u].fill(1.0);
                }
                b
            } else {
                let (fan_in, fan_out) = match p.shape[..] {
                    [o, i, k] => (i * k, o * k),
                    [i, o] => (i, o),
                    _ => (n, n),
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-limit..limit) as f32).collect()
            };
            tensors.insert(p.name, Tensor::new(p.shape, data).expect("sized from shape"));
        }
        WeightStore { tensors }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.tensors.insert(name.to_owned(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn get_checked(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| weight_err(name, "missing"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Every graph parameter must be present with the right shape. Unknown
    /// names are rejected unless `allow_extra`.
    pub fn check(&self, graph: &ModelGraph, allow_extra: bool) -> Result<()> {
        let params = graph.params();
        for p in &params {
            let t = self.get_checked(&p.name)?;
            if t.shape() != p.shape.as_slice() {
                return Err(weight_err(
                    &p.name,
                    format!("shape {:?}, graph expects {:?}", t.shape(), p.shape),
                ));
            }
        }
        if !allow_extra {
            if let Some(extra) = self.names().find(|n| !params.iter().any(|p| p.name == *n)) {
                return Err(weight_err(extra, "not a parameter of this graph"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let tensors = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                (
                    name.clone(),
                    TensorJson {
                        shape: t.shape().to_vec(),
                        data_b64_le_f32: B64.encode(bytes),
                    },
                )
            })
            .collect();
        let doc = StoreJson {
            format_version: FORMAT_VERSION,
            tensors,
        };
        serde_json::to_string_pretty(&doc).expect("plain data") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StoreJson = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported weight format version {}",
                doc.format_version
            )));
        }
        let mut tensors = BTreeMap::new();
        for (name, tj) in doc.tensors {
            let bytes = B64
                .decode(tj.data_b64_le_f32.as_bytes())
                .map_err(|e| weight_err(&name, format!("bad base64: {e}")))?;
            if bytes.len() % 4 != 0 {
                return Err(weight_err(&name, "payload is not a whole number of f32 values"));
            }
            let data: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(weight_err(&name, "non-finite value"));
            }
            let t = Tensor::new(tj.shape, data).map_err(|e| weight_err(&name, e.to_string()))?;
            tensors.insert(name, t);
        }
        Ok(WeightStore { tensors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn is_lstm_bias(graph: &ModelGraph, param: &str) -> bool {
    use super::graph::LayerSpec;
    graph.nodes().iter().any(|n| {
        matches!(n.layer, LayerSpec::Lstm { .. } | LayerSpec::Bilstm { .. })
            && param.starts_with(&format!("{}/", n.name))
    })
}
