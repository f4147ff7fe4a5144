//! Training loops for the semi-supervised GAN and the multi-task CNN-RNN,
//! checkpointing, and the glue that feeds them from a corpus on disk.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod gan;
pub mod mt;

pub use config::{GanHeads, GanTrainConfig, MtTrainConfig};
pub use gan::{GanStepReport, GanTrainer};
pub use mt::{MtStepReport, MtTrainer};

use affmt_core::losses::{LossBundle, LossError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no corpus found at {0}; create one with `affmt synth-data --out {0}`")]
    MissingCorpus(String),
    #[error("no split manifest in {0}; create one with `affmt split --corpus {0}`")]
    MissingSplit(String),
    #[error("non-finite {what} loss at step {step}: {bundle:?}")]
    NonFinite { step: u64, what: String, bundle: LossBundle },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongKind { expected: &'static str, found: String },
    #[error(transparent)]
    Nn(#[from] affmt_nn::NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] affmt_core::metrics::MetricError),
    #[error(transparent)]
    Preprocess(#[from] affmt_core::preprocess::PreprocessError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl TrainError {
    /// Whether the failure stems from invalid input rather than the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            TrainError::Config(_)
                | TrainError::MissingCorpus(_)
                | TrainError::MissingSplit(_)
                | TrainError::WrongKind { .. }
                | TrainError::Checkpoint(_)
        )
    }
}
