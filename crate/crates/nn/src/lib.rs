//! A small CPU neural-network engine (NHWC `f32` tensors, explicit
//! forward/backward layers, Adam) and the GAN and multi-task networks built
//! from declarative layer tables.

pub mod gemm;
pub mod layers;
pub mod nets;
pub mod network;
pub mod optim;
pub mod spec;
mod tensor;

pub use layers::{Layer, Mode, Param};
pub use nets::{sample_latent, Discriminator, GanArch, Generator, MultiTaskNet, MultitaskOutput};
pub use network::Network;
pub use optim::{clip_grad_norm, grad_norm, Adam, AdamConfig};
pub use spec::{Backbone, LayerSpec, ModelSpec, MultitaskArch};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
}
