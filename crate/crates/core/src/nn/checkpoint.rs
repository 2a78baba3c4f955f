//! Plain-text tensor checkpoints.
//!
//! ```text
//! surprise-rl-checkpoint v1
//! meta policy.activations tanh,tanh,identity
//! tensor policy.0.weight 256 64
//! 1.5e-2 -3.1e-1 ...
//! ```
//!
//! Values are written in Rust's shortest round-trip exponent form, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

const MAGIC: &str = "surprise-rl-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn add_mlp(&mut self, prefix: &str, mlp: &Mlp) {
        let acts: Vec<&str> = mlp.layers().iter().map(|l| l.activation.name()).collect();
        self.meta.insert(format!("{prefix}.activations"), acts.join(","));
        for (i, l) in mlp.layers().iter().enumerate() {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}.{i}.weight"),
                shape: l.weight.shape().to_vec(),
                data: l.weight.iter().copied().collect(),
            });
            self.tensors.push(NamedTensor {
                name: format!("{prefix}.{i}.bias"),
                shape: vec![l.bias.len()],
                data: l.bias.to_vec(),
            });
        }
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let acts = self
            .meta
            .get(&format!("{prefix}.activations"))
            .ok_or_else(|| bad(format!("no network named `{prefix}`")))?;
        let mut layers = Vec::new();
        for (i, name) in acts.split(',').enumerate() {
            let activation = Activation::from_name(name).ok_or_else(|| bad(format!("unknown activation `{name}`")))?;
            let w = self
                .tensor(&format!("{prefix}.{i}.weight"))
                .ok_or_else(|| bad(format!("missing {prefix}.{i}.weight")))?;
            let b = self
                .tensor(&format!("{prefix}.{i}.bias"))
                .ok_or_else(|| bad(format!("missing {prefix}.{i}.bias")))?;
            let [rows, cols] = w.shape[..] else {
                return Err(bad(format!("{} is not a matrix", w.name)));
            };
            let weight = Array2::from_shape_vec((rows, cols), w.data.clone()).map_err(|e| bad(e.to_string()))?;
            layers.push(Dense {
                weight,
                bias: Array1::from(b.data.clone()),
                activation,
            });
        }
        Mlp::from_layers(layers).map_err(|e| bad(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "tensor {} {}", t.name, dims.join(" "));
            let mut first = true;
            for v in &t.data {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing checkpoint header"));
        }
        let mut ck = Checkpoint::new();
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad("meta without key"))?;
                    let value: Vec<&str> = parts.collect();
                    ck.meta.insert(key.to_string(), value.join(" "));
                }
                Some("tensor") => {
                    let name = parts.next().ok_or_else(|| bad("tensor without name"))?.to_string();
                    let shape = parts
                        .map(|d| {
                            d.parse::<usize>()
                                .map_err(|_| bad(format!("bad dimension `{d}` in {name}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let body = lines.next().ok_or_else(|| bad(format!("missing data for {name}")))?;
                    let data = if body.is_empty() {
                        Vec::new()
                    } else {
                        body.split(' ')
                            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value `{v}` in {name}"))))
                            .collect::<Result<Vec<_>>>()?
                    };
                    if data.len() != shape.iter().product::<usize>() {
                        return Err(bad(format!("{name}: {} values for shape {shape:?}", data.len())));
                    }
                    ck.tensors.push(NamedTensor { name, shape, data });
                }
                _ => {
                    return Err(bad(format!(
                        "unrecognised line `{}`",
                        line.chars().take(40).collect::<String>()
                    )))
                }
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}
