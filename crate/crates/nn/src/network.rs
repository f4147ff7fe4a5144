use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{
    Activation, Attention, BatchNorm, Conv2d, ConvTranspose2d, Dense, Gru, Layer, MaxPool2d, Mode, Param, Reshape,
};
use crate::spec::{LayerKind, ModelSpec};
use crate::{NnError, Tensor};

/// Runtime instance of a [`ModelSpec`]. Parameters are initialised in layer
/// order from a ChaCha8 stream seeded with `seed`.
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Box<dyn Layer>>,
    temporal: Vec<bool>,
    frozen: usize,
    run_modes: Vec<Mode>,
    sequence_length: Option<usize>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network").field("spec", &self.spec.name).field("frozen", &self.frozen).finish()
    }
}

impl Network {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        let shapes = spec.infer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers: Vec<Box<dyn Layer>> = Vec::with_capacity(spec.layers.len());
        let mut prev = spec.input_shape.clone();
        for (l, out) in spec.layers.iter().zip(&shapes) {
            let layer: Box<dyn Layer> = match l.kind {
                LayerKind::Conv => Box::new(Conv2d::new(&mut rng, l.filter_shape.unwrap(), l.stride_value(), l.padding.unwrap())),
                LayerKind::ConvTranspose => Box::new(ConvTranspose2d::new(
                    &mut rng,
                    l.filter_shape.unwrap(),
                    l.stride_value(),
                    l.padding.unwrap(),
                )),
                LayerKind::FullyConnected => Box::new(Dense::new(&mut rng, prev[0], out[0])),
                LayerKind::BatchNorm => Box::new(BatchNorm::new(*prev.last().unwrap())),
                LayerKind::Activation => Box::new(Activation::new(l.activation.unwrap())),
                LayerKind::Reshape => Box::new(Reshape::new(out)),
                LayerKind::MaxPool => Box::new(MaxPool2d::new()),
                LayerKind::Gru => Box::new(Gru::new(&mut rng, prev[0], out[0])),
                LayerKind::Attention => Box::new(Attention::new(&mut rng, prev[0], l.units.unwrap(), l.window.unwrap())),
            };
            layers.push(layer);
            prev = out.clone();
        }
        Ok(Self {
            temporal: spec.layers.iter().map(|l| l.kind.is_temporal()).collect(),
            spec: spec.clone(),
            layers,
            frozen: 0,
            run_modes: Vec::new(),
            sequence_length: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Freezes the first `n` layers: they run in inference mode and are
    /// excluded from [`Self::visit_trainable_mut`].
    pub fn freeze_prefix(&mut self, n: usize) {
        self.frozen = n.min(self.layers.len());
    }

    pub fn frozen_prefix(&self) -> usize {
        self.frozen
    }

    /// Smallest sequence length the temporal layers accept.
    pub fn min_sequence_length(&self) -> usize {
        self.spec.layers.iter().filter_map(|l| l.window).max().unwrap_or(1)
    }

    /// Runs the network. `sequence_length` must be given when the network has
    /// recurrent layers; the batch is then `S * T` frames, sequence-major.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, sequence_length: Option<usize>) -> Result<Tensor, NnError> {
        let mut want = vec![x.batch()];
        want.extend_from_slice(&self.spec.input_shape);
        if x.shape() != want.as_slice() {
            return Err(NnError::Shape(format!(
                "{} expects input {:?}, got {:?}",
                self.spec.name,
                want,
                x.shape()
            )));
        }
        let has_temporal = self.temporal.iter().any(|&t| t);
        if has_temporal {
            let t = sequence_length
                .ok_or_else(|| NnError::Shape(format!("{} needs a sequence length", self.spec.name)))?;
            if t == 0 || x.batch() % t != 0 {
                return Err(NnError::Shape(format!("batch of {} frames is not a multiple of T={t}", x.batch())));
            }
            let min = self.min_sequence_length();
            if t < min {
                return Err(NnError::Config(format!(
                    "attention length {min} exceeds sequence length {t}"
                )));
            }
        }
        self.sequence_length = sequence_length;
        self.run_modes.clear();
        let mut h = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let m = if i < self.frozen { Mode::Inference } else { mode };
            self.run_modes.push(m);
            h = if self.temporal[i] {
                let t = sequence_length.unwrap();
                let n = h.batch();
                let f = h.item_len();
                let y = layer.forward(&h.reshape(&[n / t, t, f]), m);
                let w = y.shape()[2];
                y.reshape(&[n, w])
            } else {
                layer.forward(&h, m)
            };
        }
        Ok(h)
    }

    /// Back-propagates `grad` (shaped like the last output) and returns the
    /// gradient w.r.t. the input. Stops early (returning `None`) when the
    /// input gradient is not needed because the first layers are frozen.
    pub fn backward(&mut self, grad: &Tensor) -> Option<Tensor> {
        let mut g = grad.clone();
        for i in (self.frozen..self.layers.len()).rev() {
            g = if self.temporal[i] {
                let t = self.sequence_length.expect("temporal backward without forward");
                let n = g.batch();
                let f = g.item_len();
                let y = self.layers[i].backward(&g.reshape(&[n / t, t, f]));
                let w = y.shape()[2];
                y.reshape(&[n, w])
            } else {
                self.layers[i].backward(&g)
            };
        }
        (self.frozen == 0).then_some(g)
    }

    pub fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |_, p| p.zero_grad());
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&mut |n, p| f(&format!("{i:02}.{}.{n}", l.kind()), p));
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            let kind = l.kind();
            l.visit_params_mut(&mut |n, p| f(&format!("{i:02}.{kind}.{n}"), p));
        }
    }

    /// Parameters that the optimizer may update (those after the frozen prefix).
    pub fn visit_trainable_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        let frozen = self.frozen;
        for (i, l) in self.layers.iter_mut().enumerate().skip(frozen) {
            let kind = l.kind();
            l.visit_params_mut(&mut |n, p| f(&format!("{i:02}.{kind}.{n}"), p));
        }
    }

    /// Parameters of layer range `range`, e.g. a head.
    pub fn visit_layer_params(&self, range: std::ops::Range<usize>, f: &mut dyn FnMut(&str, &Param)) {
        for i in range {
            let l = &self.layers[i];
            l.visit_params(&mut |n, p| f(&format!("{i:02}.{}.{n}", l.kind()), p));
        }
    }

    pub fn visit_buffers(&self, f: &mut dyn FnMut(&str, &[f32])) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_buffers(&mut |n, b| f(&format!("{i:02}.{}.{n}", l.kind()), b));
        }
    }

    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            let kind = l.kind();
            l.visit_buffers_mut(&mut |n, b| f(&format!("{i:02}.{kind}.{n}"), b));
        }
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.len());
        n
    }

    /// Every parameter and buffer value, in visit order.
    pub fn flat_state(&self) -> Vec<f32> {
        let mut v = Vec::new();
        self.visit_params(&mut |_, p| v.extend_from_slice(&p.value));
        self.visit_buffers(&mut |_, b| v.extend_from_slice(b));
        v
    }

    /// Modes the layers ran in during the last forward.
    pub fn last_modes(&self) -> &[Mode] {
        &self.run_modes
    }
}
