//! Multi-task CNN-RNN trainer.

use std::collections::BTreeMap;
use std::path::Path;

use affmt_core::losses::{multitask_loss, LossBundle, MultitaskWeights};
use affmt_core::metrics::{evaluate, AuAccuracy, EvalTask, MetricReport, ModelOutputs};
use affmt_core::preprocess::{LabelledClip, SequenceBatch};
use affmt_core::{ConsolidatedFrame, NUM_EXPRESSIONS};
use affmt_nn::{clip_grad_norm, grad_norm, Adam, Mode, MultiTaskNet};

use crate::checkpoint::{self, CheckpointKind, CheckpointMeta, TensorSet};
use crate::config::{fingerprint, MtTrainConfig};
use crate::data::{frames_tensor, sequence_tensor};
use crate::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct MtStepReport {
    pub step: u64,
    pub bundle: LossBundle,
    pub grad_norm: f64,
}

pub struct MtTrainer {
    pub config: MtTrainConfig,
    pub seed: u64,
    pub net: MultiTaskNet,
    pub opt: Adam,
    pub step: u64,
}

impl MtTrainer {
    pub fn new(config: MtTrainConfig, seed: u64) -> Result<Self, TrainError> {
        config.validate()?;
        let mut net = MultiTaskNet::new(config.arch(), seed)?;
        net.freeze_backbone(config.freeze_cnn);
        Ok(Self { opt: Adam::new(config.adam()), config, seed, net, step: 0 })
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.config, self.seed)
    }

    pub fn weights(&self) -> MultitaskWeights {
        MultitaskWeights { alpha: self.config.alpha, beta: self.config.beta }
    }

    /// Forward and backward on `batch` without updating; gradients are left
    /// in the network.
    pub fn compute_gradients(&mut self, batch: &SequenceBatch) -> Result<LossBundle, TrainError> {
        if batch.length != self.config.sequence_length {
            return Err(TrainError::Config(format!(
                "batch sequence length {} differs from configured {}",
                batch.length, self.config.sequence_length
            )));
        }
        self.net.net.zero_grad();
        let out = self.net.forward(&sequence_tensor(batch), batch.length, Mode::Train)?;
        let l = multitask_loss(
            &out.va,
            &out.expr_logits,
            &batch.va,
            &batch.expression_indices(),
            self.weights(),
            self.config.va_loss,
            self.config.expr_loss,
        )?;
        if !l.bundle.is_finite() {
            return Err(TrainError::NonFinite { step: self.step + 1, what: "multitask".into(), bundle: l.bundle });
        }
        self.net.backward(&l.grad_va, &l.grad_logits);
        Ok(l.bundle)
    }

    pub fn train_step(&mut self, batch: &SequenceBatch) -> Result<MtStepReport, TrainError> {
        let bundle = self.compute_gradients(batch)?;
        let norm = match self.config.grad_clip {
            Some(c) => clip_grad_norm(&mut self.net.net, c).1,
            None => grad_norm(&mut self.net.net),
        };
        self.opt.update(&mut self.net.net);
        self.step += 1;
        Ok(MtStepReport { step: self.step, bundle, grad_norm: norm })
    }

    /// Inference over every VA-labelled run of at least `sequence_length`
    /// frames. Runs are covered by consecutive windows; a trailing remainder
    /// is covered by one window aligned to the end of the run.
    pub fn predict(&mut self, clips: &[LabelledClip]) -> Result<(ModelOutputs, Vec<ConsolidatedFrame>), TrainError> {
        let t = self.config.sequence_length;
        let mut va = Vec::new();
        let mut probs: Vec<[f64; NUM_EXPRESSIONS]> = Vec::new();
        let mut labels = Vec::new();
        for clip in clips {
            for (s, e) in va_runs(clip) {
                if e - s < t {
                    continue;
                }
                let mut starts: Vec<usize> = (s..=e - t).step_by(t).collect();
                if (e - s) % t != 0 {
                    starts.push(e - t);
                }
                let mut covered = s;
                for chunk in starts.chunks(self.config.sequences.max(1)) {
                    let frames: Vec<_> = chunk.iter().flat_map(|&st| clip.frames[st..st + t].iter()).collect();
                    let out = self.net.forward(&frames_tensor(&frames), t, Mode::Inference)?;
                    let p = out.expr_probs();
                    for (k, &st) in chunk.iter().enumerate() {
                        for i in covered.max(st)..st + t {
                            let j = k * t + (i - st);
                            va.push(out.va[j]);
                            probs.push(p[j]);
                            labels.push(clip.labels[i].clone());
                        }
                        covered = st + t;
                    }
                }
            }
        }
        if labels.is_empty() {
            return Err(TrainError::Config(format!("no labelled run of {t} frames to evaluate")));
        }
        Ok((ModelOutputs { va: Some(va), au_probs: None, expr_probs: Some(probs) }, labels))
    }

    pub fn evaluate(&mut self, clips: &[LabelledClip]) -> Result<MetricReport, TrainError> {
        let (out, labels) = self.predict(clips)?;
        Ok(evaluate(&out, &labels, EvalTask::Joint, AuAccuracy::ExactMatch)?)
    }

    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        let mut t = TensorSet::default();
        t.add_network("multitask", &self.net.net);
        t.add_adam("adam", &self.opt);
        let meta = CheckpointMeta {
            kind: CheckpointKind::Multitask,
            step: self.step,
            seed: self.seed,
            fingerprint: self.fingerprint(),
            config: serde_json::to_value(&self.config)?,
            optimizer_steps: BTreeMap::from([("adam".to_string(), self.opt.step)]),
        };
        checkpoint::save(dir, meta, &t)
    }

    pub fn load(dir: &Path, expected: Option<(&MtTrainConfig, u64)>) -> Result<Self, TrainError> {
        let (m, t) = checkpoint::load(dir)?;
        if m.kind != CheckpointKind::Multitask {
            return Err(TrainError::WrongKind { expected: "multitask", found: format!("{:?}", m.kind).to_lowercase() });
        }
        if let Some((cfg, seed)) = expected {
            checkpoint::check_fingerprint(&m, &fingerprint(cfg, seed))?;
        }
        let config: MtTrainConfig = serde_json::from_value(m.config.clone())?;
        if fingerprint(&config, m.seed) != m.fingerprint {
            return Err(TrainError::Checkpoint("stored config does not match its fingerprint".into()));
        }
        let mut tr = Self::new(config, m.seed)?;
        t.restore_network("multitask", &mut tr.net.net)?;
        t.restore_adam("adam", &mut tr.opt, m.optimizer_steps.get("adam").copied().unwrap_or(0))?;
        tr.step = m.step;
        Ok(tr)
    }
}

/// Maximal runs of consecutive VA-labelled frames, as `[start, end)`.
fn va_runs(clip: &LabelledClip) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=clip.labels.len() {
        let ok = i < clip.labels.len()
            && clip.labels[i].va.is_some()
            && (start.is_none() || clip.labels[i].frame_index == clip.labels[i - 1].frame_index + 1);
        match (start, ok) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                runs.push((s, i));
                start = (i < clip.labels.len() && clip.labels[i].va.is_some()).then_some(i);
            }
            _ => {}
        }
    }
    runs
}
