//! Semi-supervised GAN trainer.

use std::collections::BTreeMap;
use std::path::Path;

use affmt_core::losses::{
    anneal_weight, discriminator_loss, generator_loss, DiscHeads, DiscTargetsUsed, LossBundle, SmoothedTarget,
};
use affmt_core::metrics::{evaluate, AuAccuracy, EvalTask, MetricReport, ModelOutputs};
use affmt_core::preprocess::LabelledClip;
use affmt_nn::{clip_grad_norm, sample_latent, Adam, Discriminator, Generator, Mode, Tensor};

use crate::checkpoint::{self, CheckpointKind, CheckpointMeta, TensorSet};
use crate::config::{fingerprint, GanTrainConfig};
use crate::data::{frames_tensor, step_rng, RealBatch, STREAM_LATENT, STREAM_SAMPLE};
use crate::TrainError;

/// Gradient norm of one network update, before and after clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRecord {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscUpdate {
    pub bundle: LossBundle,
    pub targets: DiscTargetsUsed,
    pub clip: ClipRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanStepReport {
    /// 1-based index of this call.
    pub step: u64,
    pub recon_weight: f64,
    pub generator: LossBundle,
    pub generator_clip: ClipRecord,
    pub discriminator: Option<DiscUpdate>,
}

pub struct GanTrainer {
    pub config: GanTrainConfig,
    pub seed: u64,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    /// Completed calls to [`Self::train_step`].
    pub step: u64,
    smoothed: SmoothedTarget,
}

fn pixels_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| f64::from(v)).collect()
}

fn non_finite(step: u64, what: &str, bundle: &LossBundle) -> TrainError {
    TrainError::NonFinite { step, what: what.into(), bundle: bundle.clone() }
}

impl GanTrainer {
    pub fn new(config: GanTrainConfig, seed: u64) -> Result<Self, TrainError> {
        config.validate()?;
        let generator = Generator::new(&config.arch.generator_spec(), seed.wrapping_mul(2))?;
        let discriminator = Discriminator::new(&config.arch.discriminator_spec(), seed.wrapping_mul(2) + 1)?;
        Ok(Self {
            gen_opt: Adam::new(config.gen_adam()),
            disc_opt: Adam::new(config.disc_adam()),
            config,
            seed,
            generator,
            discriminator,
            step: 0,
            smoothed: SmoothedTarget::default(),
        })
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.config, self.seed)
    }

    /// Whether call number `index` (0-based) includes a discriminator update.
    pub fn updates_discriminator(&self, index: u64) -> bool {
        index % self.config.gen_steps_per_disc_step == 0
    }

    /// One generator update, preceded by a discriminator update on every
    /// `gen_steps_per_disc_step`-th call.
    pub fn train_step(&mut self, real: &RealBatch) -> Result<GanStepReport, TrainError> {
        let side = self.config.arch.image_side();
        if real.images.shape()[1..] != [side, side, 3] {
            return Err(TrainError::Config(format!(
                "real batch {:?} does not match {side}x{side} images",
                real.images.shape()
            )));
        }
        let index = self.step;
        let step = index + 1;
        let n = real.len();
        let mut rng = step_rng(self.seed, STREAM_LATENT, index);

        let discriminator = if self.updates_discriminator(index) {
            Some(self.discriminator_update(real, &sample_latent(&mut rng, n))?)
        } else {
            None
        };

        let recon_weight = anneal_weight(index, self.config.recon_anneal);
        let z = sample_latent(&mut rng, n);
        let fake = self.generator.forward(&z, Mode::Train)?;
        let heads = self.discriminator.forward(&fake, Mode::TrainFrozenStats)?;
        let gl = generator_loss(&heads.fake, &pixels_f64(&fake), &pixels_f64(&real.images), recon_weight)?;
        if !gl.bundle.is_finite() {
            return Err(non_finite(step, "generator", &gl.bundle));
        }
        let mut hg = DiscHeads::zeros(n);
        hg.fake = gl.grad_fake_prob.clone();
        self.discriminator.net.zero_grad();
        let mut dx = self.discriminator.backward(&hg);
        for (d, g) in dx.data_mut().iter_mut().zip(&gl.grad_fake_images) {
            *d += *g as f32;
        }
        self.discriminator.net.zero_grad();
        self.generator.net.zero_grad();
        self.generator.backward(&dx);
        let (before, after) = clip_grad_norm(&mut self.generator.net, self.config.grad_clip);
        self.gen_opt.update(&mut self.generator.net);

        self.step = step;
        Ok(GanStepReport {
            step,
            recon_weight,
            generator: gl.bundle,
            generator_clip: ClipRecord { before, after },
            discriminator,
        })
    }

    /// A single discriminator update against generator samples from `z`.
    /// Generator parameters and statistics are left untouched.
    pub fn discriminator_update(&mut self, real: &RealBatch, z: &Tensor) -> Result<DiscUpdate, TrainError> {
        let step = self.step + 1;
        let fake = self.generator.forward(z, Mode::TrainFrozenStats)?;
        let real_heads = self.discriminator.forward(&real.images, Mode::Train)?;
        let fake_heads = self.discriminator.forward(&fake, Mode::Train)?;
        let dl = discriminator_loss(
            &real_heads,
            &real.targets,
            &fake_heads,
            &self.smoothed,
            self.config.va_loss,
            self.config.heads.weights(),
        )?;
        if !dl.bundle.is_finite() {
            return Err(non_finite(step, "discriminator", &dl.bundle));
        }
        self.discriminator.net.zero_grad();
        self.discriminator.backward(&dl.fake_grad);
        self.discriminator.forward(&real.images, Mode::TrainFrozenStats)?;
        self.discriminator.backward(&dl.real_grad);
        let (before, after) = clip_grad_norm(&mut self.discriminator.net, self.config.grad_clip);
        self.disc_opt.update(&mut self.discriminator.net);
        Ok(DiscUpdate {
            bundle: dl.bundle,
            targets: dl.targets,
            clip: ClipRecord { before, after },
        })
    }

    /// `n` generated images from latents seeded by `sample_seed`.
    pub fn sample(&mut self, n: usize, sample_seed: u64) -> Result<Tensor, TrainError> {
        let z = sample_latent(&mut step_rng(sample_seed, STREAM_SAMPLE, 0), n);
        Ok(self.generator.forward(&z, Mode::Inference)?)
    }

    /// Discriminator VA and AU heads on every frame of `clips`.
    pub fn predict(&mut self, clips: &[LabelledClip], chunk: usize) -> Result<(ModelOutputs, Vec<affmt_core::ConsolidatedFrame>), TrainError> {
        let frames: Vec<_> = clips.iter().flat_map(|c| c.frames.iter().zip(&c.labels)).collect();
        let mut va = Vec::with_capacity(frames.len());
        let mut aus = Vec::with_capacity(frames.len());
        for part in frames.chunks(chunk.max(1)) {
            let imgs: Vec<_> = part.iter().map(|(i, _)| *i).collect();
            let h = self.discriminator.forward(&frames_tensor(&imgs), Mode::Inference)?;
            va.extend(h.va);
            aus.extend(h.aus);
        }
        let labels = frames.into_iter().map(|(_, l)| l.clone()).collect();
        Ok((ModelOutputs { va: Some(va), au_probs: Some(aus), expr_probs: None }, labels))
    }

    /// Metrics of the heads this run was trained on.
    pub fn evaluate(&mut self, clips: &[LabelledClip]) -> Result<MetricReport, TrainError> {
        let (mut out, labels) = self.predict(clips, 64)?;
        use crate::config::GanHeads;
        match self.config.heads {
            GanHeads::Va => out.au_probs = None,
            GanHeads::Au => out.va = None,
            GanHeads::Joint => {}
        }
        Ok(evaluate(&out, &labels, EvalTask::Joint, AuAccuracy::ExactMatch)?)
    }

    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        let mut t = TensorSet::default();
        t.add_network("generator", &self.generator.net);
        t.add_network("discriminator", &self.discriminator.net);
        t.add_adam("generator_adam", &self.gen_opt);
        t.add_adam("discriminator_adam", &self.disc_opt);
        let meta = CheckpointMeta {
            kind: CheckpointKind::Gan,
            step: self.step,
            seed: self.seed,
            fingerprint: self.fingerprint(),
            config: serde_json::to_value(&self.config)?,
            optimizer_steps: BTreeMap::from([
                ("generator_adam".to_string(), self.gen_opt.step),
                ("discriminator_adam".to_string(), self.disc_opt.step),
            ]),
        };
        checkpoint::save(dir, meta, &t)
    }

    /// Restores a trainer; when `expected` is given the checkpoint must have
    /// been written under that config and seed.
    pub fn load(dir: &Path, expected: Option<(&GanTrainConfig, u64)>) -> Result<Self, TrainError> {
        let (m, t) = checkpoint::load(dir)?;
        if m.kind != CheckpointKind::Gan {
            return Err(TrainError::WrongKind { expected: "gan", found: format!("{:?}", m.kind).to_lowercase() });
        }
        if let Some((cfg, seed)) = expected {
            checkpoint::check_fingerprint(&m, &fingerprint(cfg, seed))?;
        }
        let config: GanTrainConfig = serde_json::from_value(m.config.clone())?;
        if fingerprint(&config, m.seed) != m.fingerprint {
            return Err(TrainError::Checkpoint("stored config does not match its fingerprint".into()));
        }
        let mut tr = Self::new(config, m.seed)?;
        t.restore_network("generator", &mut tr.generator.net)?;
        t.restore_network("discriminator", &mut tr.discriminator.net)?;
        let steps = |k: &str| m.optimizer_steps.get(k).copied().unwrap_or(0);
        t.restore_adam("generator_adam", &mut tr.gen_opt, steps("generator_adam"))?;
        t.restore_adam("discriminator_adam", &mut tr.disc_opt, steps("discriminator_adam"))?;
        tr.step = m.step;
        Ok(tr)
    }
}
