use rand::Rng;

use super::{accumulate_column_sums, xavier_uniform, Layer, Mode, Param};
use crate::gemm::gemm;
use crate::Tensor;

/// Affine map over the last axis; leading axes are treated as batch.
#[derive(Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Tensor,
}

impl Dense {
    pub fn new(rng: &mut impl Rng, inputs: usize, units: usize) -> Self {
        Self {
            weight: Param::new(&[inputs, units], xavier_uniform(rng, inputs, units, inputs * units)),
            bias: Param::zeros(&[units]),
            input: Tensor::default(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn units(&self) -> usize {
        self.weight.shape[1]
    }
}

impl Layer for Dense {
    fn kind(&self) -> &'static str {
        "fully-connected"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let (f, u) = (self.inputs(), self.units());
        assert_eq!(x.shape().last(), Some(&f), "dense input width");
        let rows = x.len() / f;
        let mut y = Vec::with_capacity(rows * u);
        for _ in 0..rows {
            y.extend_from_slice(&self.bias.value);
        }
        gemm(rows, f, u, x.data(), false, &self.weight.value, false, &mut y, 1.0);
        self.input = x.clone();
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = u;
        Tensor::from_vec(&shape, y)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (f, u) = (self.inputs(), self.units());
        let rows = grad.len() / u;
        accumulate_column_sums(&mut self.bias.grad, grad.data(), u);
        gemm(f, rows, u, self.input.data(), true, grad.data(), false, &mut self.weight.grad, 1.0);
        let mut dx = vec![0.0; rows * f];
        gemm(rows, u, f, grad.data(), false, &self.weight.value, true, &mut dx, 0.0);
        Tensor::from_vec(self.input.shape(), dx)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}
