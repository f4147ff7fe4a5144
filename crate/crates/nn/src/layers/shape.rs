use super::{Layer, Mode};
use crate::Tensor;

/// Reshapes each batch item to `target`.
#[derive(Debug)]
pub struct Reshape {
    target: Vec<usize>,
    input_shape: Vec<usize>,
}

impl Reshape {
    pub fn new(target: &[usize]) -> Self {
        Self {
            target: target.to_vec(),
            input_shape: Vec::new(),
        }
    }
}

impl Layer for Reshape {
    fn kind(&self) -> &'static str {
        "reshape"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        self.input_shape = x.shape().to_vec();
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.target);
        x.clone().reshape(&shape)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        grad.clone().reshape(&self.input_shape)
    }
}

/// 2x2 max pooling with stride 2 over NHWC input; odd trailing rows and
/// columns are dropped.
#[derive(Debug, Default)]
pub struct MaxPool2d {
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for MaxPool2d {
    fn kind(&self) -> &'static str {
        "max-pool"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let [n, h, w, c] = *x.shape() else { panic!("max-pool expects NHWC input") };
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Vec::with_capacity(n * oh * ow * c);
        self.argmax = Vec::with_capacity(n * oh * ow * c);
        let d = x.data();
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = usize::MAX;
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let i = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                            if best == usize::MAX || d[i] > d[best] {
                                best = i;
                            }
                        }
                        y.push(d[best]);
                        self.argmax.push(best);
                    }
                }
            }
        }
        self.input_shape = x.shape().to_vec();
        Tensor::from_vec(&[n, oh, ow, c], y)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut dx = Tensor::zeros(&self.input_shape);
        let d = dx.data_mut();
        for (&i, &g) in self.argmax.iter().zip(grad.data()) {
            d[i] += g;
        }
        dx
    }
}
