//! Training configurations. Files are TOML; unknown keys are rejected and
//! command-line overrides are applied on top of file values.

use std::path::Path;

use affmt_core::losses::{AnnealSchedule, ExprLossMode, HeadWeights, VaLossMode};
use affmt_core::preprocess::Resolution;
use affmt_nn::{AdamConfig, Backbone, GanArch, MultitaskArch};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::TrainError;

/// Supervised heads the discriminator is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanHeads {
    Va,
    Au,
    Joint,
}

impl GanHeads {
    pub fn weights(self) -> HeadWeights {
        match self {
            GanHeads::Va => HeadWeights::VA_ONLY,
            GanHeads::Au => HeadWeights::AU_ONLY,
            GanHeads::Joint => HeadWeights::JOINT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanTrainConfig {
    pub arch: GanArch,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub grad_clip: f64,
    /// Generator updates per discriminator update.
    pub gen_steps_per_disc_step: u64,
    #[serde(alias = "va_mode")]
    pub va_loss: VaLossMode,
    pub heads: GanHeads,
    pub recon_anneal: AnnealSchedule,
    pub steps: u64,
    pub required_annotators: usize,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            arch: GanArch::C1,
            gen_lr: 1e-4,
            disc_lr: 1e-5,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch: 64,
            grad_clip: 20.0,
            gen_steps_per_disc_step: 5,
            va_loss: VaLossMode::Ccc,
            heads: GanHeads::Joint,
            recon_anneal: AnnealSchedule::default(),
            steps: 200,
            required_annotators: 3,
        }
    }
}

impl GanTrainConfig {
    /// Defaults for configuration 2 (96x96, ratio 2).
    pub fn config2(kernel7: bool) -> Self {
        Self {
            arch: if kernel7 { GanArch::C2K7 } else { GanArch::C2K5 },
            gen_steps_per_disc_step: 2,
            ..Self::default()
        }
    }

    pub fn resolution(&self) -> Resolution {
        match self.arch {
            GanArch::C1 => Resolution::R32,
            GanArch::C2K5 | GanArch::C2K7 => Resolution::R96,
        }
    }

    pub fn gen_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.gen_lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn disc_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.disc_lr, ..self.gen_adam() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let mut bad = Vec::new();
        if !(self.gen_lr > 0.0 && self.disc_lr > 0.0) {
            bad.push("learning rates must be positive");
        }
        if !(self.grad_clip > 0.0) {
            bad.push("grad_clip must be positive");
        }
        if self.gen_steps_per_disc_step == 0 {
            bad.push("gen_steps_per_disc_step must be positive");
        }
        if self.batch < 2 {
            bad.push("batch must be at least 2");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            bad.push("adam betas must lie in [0, 1)");
        }
        match bad.is_empty() {
            true => Ok(()),
            false => Err(TrainError::Config(bad.join("; "))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MtTrainConfig {
    pub backbone: Backbone,
    pub input_size: usize,
    pub feature_units: usize,
    pub gru_units: usize,
    pub attention_units: usize,
    pub attention_length: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Sequences per batch (S).
    pub sequences: usize,
    /// Frames per sequence (T).
    pub sequence_length: usize,
    pub alpha: f64,
    pub beta: f64,
    pub va_loss: VaLossMode,
    pub expr_loss: ExprLossMode,
    pub freeze_cnn: bool,
    pub grad_clip: Option<f64>,
    pub steps: u64,
    pub required_annotators: usize,
}

impl Default for MtTrainConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Tiny,
            input_size: 96,
            feature_units: 128,
            gru_units: 128,
            attention_units: 64,
            attention_length: 32,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sequences: 10,
            sequence_length: 80,
            alpha: 0.5,
            beta: 0.5,
            va_loss: VaLossMode::Ccc,
            expr_loss: ExprLossMode::CrossEntropy,
            freeze_cnn: false,
            grad_clip: None,
            steps: 300,
            required_annotators: 3,
        }
    }
}

impl MtTrainConfig {
    pub fn arch(&self) -> MultitaskArch {
        MultitaskArch {
            backbone: self.backbone,
            input_size: self.input_size,
            feature_units: self.feature_units,
            gru_units: self.gru_units,
            attention_units: self.attention_units,
            attention_length: self.attention_length,
        }
    }

    pub fn resolution(&self) -> Result<Resolution, TrainError> {
        Resolution::try_from(self.input_size as u32).map_err(TrainError::Config)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let mut bad = Vec::new();
        if !(self.lr > 0.0) {
            bad.push("lr must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            bad.push("alpha and beta must lie in [0, 1]".into());
        }
        if self.sequences == 0 || self.sequence_length < 2 {
            bad.push("need at least one sequence of two frames".into());
        }
        if self.attention_length > self.sequence_length {
            bad.push(format!(
                "attention_length {} exceeds sequence_length {}",
                self.attention_length, self.sequence_length
            ));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            bad.push("grad_clip must be positive".into());
        }
        if let Err(e) = self.resolution() {
            bad.push(e.to_string());
        }
        match bad.is_empty() {
            true => Ok(()),
            false => Err(TrainError::Config(bad.join("; "))),
        }
    }
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, TrainError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
}

/// Applies `key = value` overrides. Every key must already exist in the
/// serialized config.
pub fn apply_overrides<T: Serialize + DeserializeOwned>(
    base: &T,
    overrides: &serde_json::Map<String, serde_json::Value>,
) -> Result<T, TrainError> {
    let mut v = serde_json::to_value(base)?;
    let obj = v.as_object_mut().expect("configs serialize to objects");
    for (k, val) in overrides {
        if !obj.contains_key(k) {
            return Err(TrainError::Config(format!("unknown config key {k:?}")));
        }
        obj.insert(k.clone(), val.clone());
    }
    serde_json::from_value(v).map_err(|e| TrainError::Config(e.to_string()))
}

/// Parses a command-line `key=value` pair; the value is read as TOML so
/// numbers, booleans and bare strings all work.
pub fn parse_override(s: &str) -> Result<(String, serde_json::Value), TrainError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| TrainError::Config(format!("override {s:?} is not key=value")))?;
    let k = k.trim().to_string();
    let v = v.trim();
    let parsed: toml::Value = toml::from_str(&format!("x = {v}"))
        .map(|t: toml::Table| t["x"].clone())
        .unwrap_or_else(|_| toml::Value::String(v.to_string()));
    Ok((k, serde_json::to_value(parsed)?))
}

/// SHA-256 over the canonical JSON of the config and the seed.
pub fn fingerprint<T: Serialize>(config: &T, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("configs serialize"));
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}
