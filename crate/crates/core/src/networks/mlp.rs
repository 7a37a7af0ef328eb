use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::autodiff::{Tape, Tensor, Var};
use crate::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Builds a stack `input → hidden… → output` with `hidden_act` on every hidden layer.
pub fn stack(
    input: usize,
    hidden: &[usize],
    output: usize,
    hidden_act: Activation,
    output_act: Activation,
) -> Vec<LayerSpec> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i == last { output_act } else { hidden_act };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

pub fn validate_specs(specs: &[LayerSpec]) -> Result<(), NetworkError> {
    if specs.is_empty() {
        return Err(NetworkError::InconsistentSpecs(
            "network has no layers".into(),
        ));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(NetworkError::InconsistentSpecs(format!(
                "layer {i} has a zero dimension"
            )));
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].out_dim != w[1].in_dim {
            return Err(NetworkError::InconsistentSpecs(format!(
                "layer {i} outputs {} but layer {} expects {}",
                w[0].out_dim,
                i + 1,
                w[1].in_dim
            )));
        }
    }
    Ok(())
}

/// One fully connected layer; `weight` is `out×in`, `bias` is `1×out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.weight.cols(), self.weight.rows(), self.activation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self, NetworkError> {
        validate_specs(specs)?;
        let layers = specs
            .iter()
            .map(|s| {
                let limit = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
                let weight =
                    Tensor::from_fn(s.out_dim, s.in_dim, |_, _| rng.random_range(-limit..limit));
                Dense {
                    weight,
                    bias: Tensor::zeros(1, s.out_dim),
                    activation: s.activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(specs: &[LayerSpec]) -> Result<Self, NetworkError> {
        validate_specs(specs)?;
        Ok(Self {
            layers: specs
                .iter()
                .map(|s| Dense {
                    weight: Tensor::zeros(s.out_dim, s.in_dim),
                    bias: Tensor::zeros(1, s.out_dim),
                    activation: s.activation,
                })
                .collect(),
        })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Registers the parameters on `tape`, as leaves when `trainable`, else as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let (w, b) = if trainable {
                    (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()))
                } else {
                    (
                        tape.constant(l.weight.clone()),
                        tape.constant(l.bias.clone()),
                    )
                };
                (w, b, l.activation)
            })
            .collect();
        BoundMlp {
            layers,
            input_dim: self.input_dim(),
        }
    }
}

/// Train-time dropout on hidden activations.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut SeededRng,
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var, Activation)>,
    input_dim: usize,
}

impl BoundMlp {
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|(w, b, _)| [*w, *b])
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var, NetworkError> {
        let cols = tape.value(x).cols();
        if cols != self.input_dim {
            return Err(NetworkError::DimMismatch {
                what: "network input",
                expected: self.input_dim,
                found: cols,
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b, act)) in self.layers.iter().enumerate() {
            h = tape.affine(h, w, b)?;
            h = match act {
                Activation::Tanh => tape.tanh(h)?,
                Activation::Relu => tape.relu(h)?,
                Activation::Sigmoid => tape.sigmoid(h)?,
                Activation::Linear => h,
            };
            if i < last {
                if let Some(d) = dropout.as_deref_mut() {
                    if d.rate > 0.0 {
                        let (rows, cols) = tape.value(h).shape();
                        let keep = 1.0 - d.rate;
                        let mask = Tensor::from_fn(rows, cols, |_, _| {
                            if d.rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        });
                        let m = tape.constant(mask);
                        h = tape.mul(h, m)?;
                    }
                }
            }
        }
        Ok(h)
    }
}
