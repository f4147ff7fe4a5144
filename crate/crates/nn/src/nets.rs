//! The GAN pair and the multi-task network built on [`Network`].

use affmt_core::losses::{softmax, DiscHeads};
use affmt_core::{NUM_AUS, NUM_EXPRESSIONS};
use rand::Rng;

use crate::layers::activation::sigmoid;
use crate::layers::Mode;
use crate::network::Network;
use crate::spec::{self, LayerKind, ModelSpec, MultitaskArch, LATENT_DIM};
use crate::{NnError, Tensor};

/// Which GAN architecture pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GanArch {
    /// 32x32 images.
    C1,
    /// 96x96 images with 5x5 filters.
    C2K5,
    /// 96x96 images with 7x7 filters.
    C2K7,
}

impl GanArch {
    pub fn image_side(self) -> usize {
        match self {
            GanArch::C1 => 32,
            GanArch::C2K5 | GanArch::C2K7 => 96,
        }
    }

    pub fn generator_spec(self) -> ModelSpec {
        match self {
            GanArch::C1 => spec::generator_c1(),
            GanArch::C2K5 => spec::generator_c2(5),
            GanArch::C2K7 => spec::generator_c2(7),
        }
    }

    pub fn discriminator_spec(self) -> ModelSpec {
        match self {
            GanArch::C1 => spec::discriminator_c1(),
            GanArch::C2K5 => spec::discriminator_c2(5),
            GanArch::C2K7 => spec::discriminator_c2(7),
        }
    }
}

/// Latent batch drawn uniformly from `[-1, 1]`.
pub fn sample_latent(rng: &mut impl Rng, n: usize) -> Tensor {
    let data = (0..n * LATENT_DIM).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
    Tensor::from_vec(&[n, LATENT_DIM], data)
}

#[derive(Debug)]
pub struct Generator {
    pub net: Network,
}

impl Generator {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        Ok(Self { net: Network::build(spec, seed)? })
    }

    /// `[N, 100]` latents to `[N, side, side, 3]` images in `[-1, 1]`.
    pub fn forward(&mut self, z: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        self.net.forward(z, mode, None)
    }

    pub fn backward(&mut self, grad: &Tensor) {
        self.net.backward(grad);
    }
}

pub const DISC_OUTPUTS: usize = 2 + NUM_AUS + 1;

/// Discriminator with linear VA, sigmoid AU and sigmoid fake-class heads.
#[derive(Debug)]
pub struct Discriminator {
    pub net: Network,
    heads: DiscHeads,
}

impl Discriminator {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        let net = Network::build(spec, seed)?;
        let out: usize = spec.output_heads.iter().map(|h| h.size).sum();
        if out != DISC_OUTPUTS {
            return Err(NnError::Spec(format!("discriminator has {out} outputs, expected {DISC_OUTPUTS}")));
        }
        Ok(Self { net, heads: DiscHeads::default() })
    }

    /// Raw `[N, 11]` outputs before head activations.
    pub fn forward_logits(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        self.net.forward(x, mode, None)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<DiscHeads, NnError> {
        let logits = self.forward_logits(x, mode)?;
        self.heads = heads_from_logits(&logits);
        Ok(self.heads.clone())
    }

    /// Takes gradients w.r.t. the activated heads of the last forward and
    /// returns the gradient w.r.t. the input images.
    pub fn backward(&mut self, grad: &DiscHeads) -> Tensor {
        let n = self.heads.len();
        assert_eq!(grad.len(), n, "head gradient batch");
        let mut g = Vec::with_capacity(n * DISC_OUTPUTS);
        for i in 0..n {
            g.extend(grad.va[i].iter().map(|&v| v as f32));
            for (d, p) in grad.aus[i].iter().zip(&self.heads.aus[i]) {
                g.push((d * p * (1.0 - p)) as f32);
            }
            let p = self.heads.fake[i];
            g.push((grad.fake[i] * p * (1.0 - p)) as f32);
        }
        self.net
            .backward(&Tensor::from_vec(&[n, DISC_OUTPUTS], g))
            .expect("discriminator is never frozen")
    }
}

pub fn heads_from_logits(logits: &Tensor) -> DiscHeads {
    let n = logits.batch();
    let mut h = DiscHeads::zeros(n);
    for (i, row) in logits.data().chunks_exact(DISC_OUTPUTS).enumerate() {
        h.va[i] = [f64::from(row[0]), f64::from(row[1])];
        for k in 0..NUM_AUS {
            h.aus[i][k] = f64::from(sigmoid(row[2 + k]));
        }
        h.fake[i] = f64::from(sigmoid(row[10]));
    }
    h
}

pub const MT_OUTPUTS: usize = 2 + NUM_EXPRESSIONS;

/// Per-frame multi-task predictions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultitaskOutput {
    pub va: Vec<[f64; 2]>,
    /// Pre-softmax expression scores.
    pub expr_logits: Vec<[f64; NUM_EXPRESSIONS]>,
}

impl MultitaskOutput {
    pub fn len(&self) -> usize {
        self.va.len()
    }

    pub fn is_empty(&self) -> bool {
        self.va.is_empty()
    }

    pub fn expr_probs(&self) -> Vec<[f64; NUM_EXPRESSIONS]> {
        self.expr_logits
            .iter()
            .map(|z| softmax(z).try_into().expect("seven classes"))
            .collect()
    }
}

/// CNN backbone, GRU, windowed attention and the 9-way head.
#[derive(Debug)]
pub struct MultiTaskNet {
    pub net: Network,
    arch: MultitaskArch,
    backbone_end: usize,
}

impl MultiTaskNet {
    pub fn new(arch: MultitaskArch, seed: u64) -> Result<Self, NnError> {
        let spec = spec::multitask_cnn_rnn(&arch);
        Self::from_spec(&spec, arch, seed)
    }

    pub fn from_spec(spec: &ModelSpec, arch: MultitaskArch, seed: u64) -> Result<Self, NnError> {
        let net = Network::build(spec, seed)?;
        let first_temporal = spec
            .first_temporal()
            .ok_or_else(|| NnError::Spec("multi-task network needs a recurrent layer".into()))?;
        let backbone_end = spec.layers[..first_temporal]
            .iter()
            .rposition(|l| l.kind == LayerKind::Reshape)
            .map_or(first_temporal, |i| i + 1);
        Ok(Self { net, arch, backbone_end })
    }

    pub fn arch(&self) -> &MultitaskArch {
        &self.arch
    }

    /// Number of leading layers forming the convolutional backbone.
    pub fn backbone_layers(&self) -> usize {
        self.backbone_end
    }

    pub fn check_sequence_length(&self, t: usize) -> Result<(), NnError> {
        if self.arch.attention_length > t {
            return Err(NnError::Config(format!(
                "attention length {} exceeds sequence length {t}",
                self.arch.attention_length
            )));
        }
        Ok(())
    }

    /// Keeps the backbone fixed: it runs in inference mode and is left out of
    /// optimizer updates.
    pub fn freeze_backbone(&mut self, freeze: bool) {
        self.net.freeze_prefix(if freeze { self.backbone_end } else { 0 });
    }

    pub fn forward(&mut self, frames: &Tensor, sequence_length: usize, mode: Mode) -> Result<MultitaskOutput, NnError> {
        self.check_sequence_length(sequence_length)?;
        let y = self.net.forward(frames, mode, Some(sequence_length))?;
        let mut out = MultitaskOutput {
            va: Vec::with_capacity(y.batch()),
            expr_logits: Vec::with_capacity(y.batch()),
        };
        for row in y.data().chunks_exact(MT_OUTPUTS) {
            out.va.push([f64::from(row[0]), f64::from(row[1])]);
            let mut z = [0.0; NUM_EXPRESSIONS];
            for (d, s) in z.iter_mut().zip(&row[2..]) {
                *d = f64::from(*s);
            }
            out.expr_logits.push(z);
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_va: &[[f64; 2]], grad_logits: &[[f64; NUM_EXPRESSIONS]]) {
        let n = grad_va.len();
        let mut g = Vec::with_capacity(n * MT_OUTPUTS);
        for (v, e) in grad_va.iter().zip(grad_logits) {
            g.extend(v.iter().chain(e).map(|&x| x as f32));
        }
        self.net.backward(&Tensor::from_vec(&[n, MT_OUTPUTS], g));
    }

    /// Gradients of the head parameters split into the VA part and the
    /// expression part (weight columns and biases of each output block).
    pub fn head_gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let last = self.net.layer_count() - 1;
        let (mut va, mut expr) = (Vec::new(), Vec::new());
        self.net.visit_layer_params(last..last + 1, &mut |_, p| {
            for (i, g) in p.grad.iter().enumerate() {
                if i % MT_OUTPUTS < 2 {
                    va.push(*g);
                } else {
                    expr.push(*g);
                }
            }
        });
        (va, expr)
    }

    /// Parameters and buffers of the backbone, flattened.
    pub fn backbone_state(&self) -> Vec<f32> {
        let mut v = Vec::new();
        let end = self.backbone_end;
        self.net.visit_params(&mut |name, p| {
            if layer_index(name) < end {
                v.extend_from_slice(&p.value);
            }
        });
        self.net.visit_buffers(&mut |name, b| {
            if layer_index(name) < end {
                v.extend_from_slice(b);
            }
        });
        v
    }
}

fn layer_index(name: &str) -> usize {
    name.split('.').next().and_then(|s| s.parse().ok()).unwrap_or(usize::MAX)
}
