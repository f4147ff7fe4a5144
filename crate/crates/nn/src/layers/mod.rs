//! Layers with explicit forward and backward passes. Every layer caches what
//! its backward pass needs during `forward`; calling `backward` applies to the
//! most recent forward call and accumulates parameter gradients.

pub mod activation;
mod attention;
mod batchnorm;
mod conv;
mod dense;
mod gru;
mod shape;

pub use activation::{Activation, ActivationKind};
pub use attention::Attention;
pub use batchnorm::BatchNorm;
pub use conv::{Conv2d, ConvGeometry, ConvTranspose2d, Padding};
pub use dense::Dense;
pub use gru::Gru;
pub use shape::{MaxPool2d, Reshape};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Batch statistics, running statistics left untouched.
    TrainFrozenStats,
    /// Running statistics.
    Inference,
}

impl Mode {
    pub fn uses_batch_stats(self) -> bool {
        !matches!(self, Mode::Inference)
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn new(shape: &[usize], value: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        Self {
            shape: shape.to_vec(),
            grad: vec![0.0; value.len()],
            value,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

pub trait Layer: Send {
    fn kind(&self) -> &'static str;

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor;

    /// Gradient w.r.t. the input of the last `forward`, accumulating
    /// parameter gradients on the way.
    fn backward(&mut self, grad: &Tensor) -> Tensor;

    fn visit_params(&self, _f: &mut dyn FnMut(&str, &Param)) {}

    fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Param)) {}

    /// Non-trainable state such as batch-norm running statistics.
    fn visit_buffers(&self, _f: &mut dyn FnMut(&str, &[f32])) {}

    fn visit_buffers_mut(&mut self, _f: &mut dyn FnMut(&str, &mut [f32])) {}
}

/// Normal(0, std) truncated at two standard deviations.
pub fn truncated_normal(rng: &mut impl Rng, n: usize, std: f32) -> Vec<f32> {
    (0..n)
        .map(|_| loop {
            let v: f32 = StandardNormal.sample(rng);
            if v.abs() <= 2.0 {
                break v * std;
            }
        })
        .collect()
}

/// Glorot uniform.
pub fn xavier_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
    (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
}

pub const CONV_INIT_STD: f32 = 0.02;

pub(crate) fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Column sums of a `rows x cols` row-major matrix, accumulated into `out`.
pub(crate) fn accumulate_column_sums(out: &mut [f32], m: &[f32], cols: usize) {
    for row in m.chunks_exact(cols) {
        add_into(out, row);
    }
}
