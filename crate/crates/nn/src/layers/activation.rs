use serde::{Deserialize, Serialize};

use super::{Layer, Mode};
use crate::Tensor;

pub const LEAKY_SLOPE: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Linear,
    /// Over the last axis.
    Softmax,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky-relu(0.2)",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Linear => "linear",
            ActivationKind::Softmax => "softmax",
        }
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[derive(Debug)]
pub struct Activation {
    kind: ActivationKind,
    input: Tensor,
    output: Tensor,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Self {
            kind,
            input: Tensor::default(),
            output: Tensor::default(),
        }
    }

    pub fn activation(&self) -> ActivationKind {
        self.kind
    }
}

impl Layer for Activation {
    fn kind(&self) -> &'static str {
        "activation"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let y = match self.kind {
            ActivationKind::Relu => x.map(|v| v.max(0.0)),
            ActivationKind::LeakyRelu => x.map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v }),
            ActivationKind::Tanh => x.map(f32::tanh),
            ActivationKind::Sigmoid => x.map(sigmoid),
            ActivationKind::Linear => x.clone(),
            ActivationKind::Softmax => {
                let mut y = x.clone();
                let c = *x.shape().last().unwrap();
                y.data_mut().chunks_exact_mut(c).for_each(softmax_in_place);
                y
            }
        };
        match self.kind {
            ActivationKind::Relu | ActivationKind::LeakyRelu => self.input = x.clone(),
            ActivationKind::Linear => {}
            _ => self.output = y.clone(),
        }
        y
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = grad.clone();
        let d = g.data_mut();
        match self.kind {
            ActivationKind::Relu => {
                for (gi, &x) in d.iter_mut().zip(self.input.data()) {
                    if x <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            ActivationKind::LeakyRelu => {
                for (gi, &x) in d.iter_mut().zip(self.input.data()) {
                    if x <= 0.0 {
                        *gi *= LEAKY_SLOPE;
                    }
                }
            }
            ActivationKind::Tanh => {
                for (gi, &y) in d.iter_mut().zip(self.output.data()) {
                    *gi *= 1.0 - y * y;
                }
            }
            ActivationKind::Sigmoid => {
                for (gi, &y) in d.iter_mut().zip(self.output.data()) {
                    *gi *= y * (1.0 - y);
                }
            }
            ActivationKind::Linear => {}
            ActivationKind::Softmax => {
                let c = *grad.shape().last().unwrap();
                for (gr, yr) in d.chunks_exact_mut(c).zip(self.output.data().chunks_exact(c)) {
                    let dot: f32 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (gi, &y) in gr.iter_mut().zip(yr) {
                        *gi = y * (*gi - dot);
                    }
                }
            }
        }
        g
    }
}
