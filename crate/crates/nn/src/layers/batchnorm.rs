use super::{Layer, Mode, Param};
use crate::Tensor;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

/// Batch normalization over every axis but the last.
#[derive(Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    batch_stats: bool,
    shape: Vec<usize>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(&[channels], vec![1.0; channels]),
            beta: Param::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            xhat: Vec::new(),
            inv_std: Vec::new(),
            batch_stats: false,
            shape: Vec::new(),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

impl Layer for BatchNorm {
    fn kind(&self) -> &'static str {
        "batch-norm"
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let c = self.channels();
        assert_eq!(x.shape().last(), Some(&c), "batch-norm channels");
        let rows = x.len() / c;
        let (mean, var) = if mode.uses_batch_stats() {
            let mut mean = vec![0.0f64; c];
            for r in x.data().chunks_exact(c) {
                for (m, &v) in mean.iter_mut().zip(r) {
                    *m += f64::from(v);
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0f64; c];
            for r in x.data().chunks_exact(c) {
                for ((s, &v), m) in var.iter_mut().zip(r).zip(&mean) {
                    let d = f64::from(v) - m;
                    *s += d * d;
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            let mean: Vec<f32> = mean.iter().map(|&m| m as f32).collect();
            let var: Vec<f32> = var.iter().map(|&v| v as f32).collect();
            if mode == Mode::Train {
                for i in 0..c {
                    self.running_mean[i] = BN_MOMENTUM * self.running_mean[i] + (1.0 - BN_MOMENTUM) * mean[i];
                    self.running_var[i] = BN_MOMENTUM * self.running_var[i] + (1.0 - BN_MOMENTUM) * var[i];
                }
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        self.inv_std = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        self.xhat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for r in x.data().chunks_exact(c) {
            for i in 0..c {
                let h = (r[i] - mean[i]) * self.inv_std[i];
                self.xhat.push(h);
                y.push(h * self.gamma.value[i] + self.beta.value[i]);
            }
        }
        self.batch_stats = mode.uses_batch_stats();
        self.shape = x.shape().to_vec();
        Tensor::from_vec(x.shape(), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let c = self.channels();
        let rows = (grad.len() / c) as f32;
        let mut sum_dy = vec![0.0f32; c];
        let mut sum_dy_xhat = vec![0.0f32; c];
        for (g, h) in grad.data().chunks_exact(c).zip(self.xhat.chunks_exact(c)) {
            for i in 0..c {
                sum_dy[i] += g[i];
                sum_dy_xhat[i] += g[i] * h[i];
            }
        }
        for i in 0..c {
            self.beta.grad[i] += sum_dy[i];
            self.gamma.grad[i] += sum_dy_xhat[i];
        }
        let mut dx = Vec::with_capacity(grad.len());
        for (g, h) in grad.data().chunks_exact(c).zip(self.xhat.chunks_exact(c)) {
            for i in 0..c {
                let scale = self.gamma.value[i] * self.inv_std[i];
                dx.push(if self.batch_stats {
                    scale * (g[i] - sum_dy[i] / rows - h[i] * sum_dy_xhat[i] / rows)
                } else {
                    scale * g[i]
                });
            }
        }
        Tensor::from_vec(&self.shape, dx)
    }

    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("gamma", &self.gamma);
        f("beta", &self.beta);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("gamma", &mut self.gamma);
        f("beta", &mut self.beta);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&str, &[f32])) {
        f("running_mean", &self.running_mean);
        f("running_var", &self.running_var);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        f("running_mean", &mut self.running_mean);
        f("running_var", &mut self.running_var);
    }
}
