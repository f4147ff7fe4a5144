//! Corpus loading and batch construction for the trainers.

use std::path::Path;

use affmt_core::dataset::{consolidate, SplitName};
use affmt_core::losses::RealTargets;
use affmt_core::preprocess::corpus::{list_videos, load_clips, read_split};
use affmt_core::preprocess::synth::SynthCorpus;
use affmt_core::preprocess::{FullFrameCrop, ImageTensor, LabelledClip, Resolution, SequenceBatch, SequenceBatcher};
use affmt_core::ConsolidatedFrame;
use affmt_nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::TrainError;

/// Independent random streams derived from `(seed, purpose, step)`, so any
/// step can be replayed without carrying generator state.
pub fn step_rng(seed: u64, purpose: u16, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(purpose) << 48) | (step & ((1 << 48) - 1)));
    rng
}

pub const STREAM_LATENT: u16 = 1;
pub const STREAM_REAL: u16 = 2;
pub const STREAM_SAMPLE: u16 = 3;

/// Loads every clip of `split`. A missing corpus or split manifest is
/// reported with the command that creates it.
pub fn load_split(
    root: &Path,
    split: SplitName,
    resolution: Resolution,
    required_annotators: usize,
) -> Result<Vec<LabelledClip>, TrainError> {
    if list_videos(root).map(|v| v.is_empty()).unwrap_or(true) {
        return Err(TrainError::MissingCorpus(root.display().to_string()));
    }
    let manifest = read_split(root).map_err(|_| {
        TrainError::MissingSplit(root.display().to_string())
    })?;
    let ids = manifest.videos(split);
    if ids.is_empty() {
        return Err(TrainError::Config(format!("split {split:?} of {} is empty", root.display())));
    }
    Ok(load_clips(root, ids, resolution, &FullFrameCrop, required_annotators)?)
}

/// Frames as an NHWC tensor.
pub fn frames_tensor(frames: &[&ImageTensor]) -> Tensor {
    let (h, w) = (frames[0].height(), frames[0].width());
    let mut data = Vec::with_capacity(frames.len() * h * w * 3);
    for f in frames {
        data.extend_from_slice(f.data());
    }
    Tensor::from_vec(&[frames.len(), h, w, 3], data)
}

pub fn sequence_tensor(batch: &SequenceBatch) -> Tensor {
    Tensor::from_vec(&[batch.frames(), batch.height, batch.width, 3], batch.pixels.clone())
}

/// A batch of real images with whatever labels they carry.
#[derive(Debug, Clone)]
pub struct RealBatch {
    pub images: Tensor,
    pub targets: RealTargets,
}

impl RealBatch {
    pub fn from_frames(frames: &[(&ImageTensor, &ConsolidatedFrame)]) -> Self {
        let imgs: Vec<&ImageTensor> = frames.iter().map(|(i, _)| *i).collect();
        Self {
            images: frames_tensor(&imgs),
            targets: RealTargets {
                va: frames.iter().map(|(_, l)| l.va.map(|v| [v.valence, v.arousal])).collect(),
                aus: frames.iter().map(|(_, l)| l.aus.map(|a| a.as_f64())).collect(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.images.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Uniform sampling (with replacement) of labelled frames across clips.
#[derive(Debug)]
pub struct FramePool<'a> {
    clips: &'a [LabelledClip],
    index: Vec<(usize, usize)>,
}

impl<'a> FramePool<'a> {
    pub fn new(clips: &'a [LabelledClip]) -> Result<Self, TrainError> {
        let index: Vec<(usize, usize)> = clips
            .iter()
            .enumerate()
            .flat_map(|(c, clip)| (0..clip.len()).map(move |i| (c, i)))
            .collect();
        if index.is_empty() {
            return Err(TrainError::Config("no labelled frames to train on".into()));
        }
        Ok(Self { clips, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn sample(&self, rng: &mut impl Rng, n: usize) -> RealBatch {
        let picks: Vec<(&ImageTensor, &ConsolidatedFrame)> = (0..n)
            .map(|_| {
                let (c, i) = self.index[rng.random_range(0..self.index.len())];
                (&self.clips[c].frames[i], &self.clips[c].labels[i])
            })
            .collect();
        RealBatch::from_frames(&picks)
    }

    /// Batch used at training step `step`.
    pub fn batch_for_step(&self, seed: u64, step: u64, n: usize) -> RealBatch {
        self.sample(&mut step_rng(seed, STREAM_REAL, step), n)
    }
}

/// Maps a global step onto `(epoch, batch index)` of a [`SequenceBatcher`].
#[derive(Debug)]
pub struct SequenceStream<'a> {
    batcher: SequenceBatcher<'a>,
    // (epoch, first step, batches in epoch)
    epochs: Vec<(u64, u64, usize)>,
}

impl<'a> SequenceStream<'a> {
    pub fn new(clips: &'a [LabelledClip], sequences: usize, length: usize, seed: u64) -> Result<Self, TrainError> {
        let batcher = SequenceBatcher::new(clips, sequences, length, seed)?;
        if batcher.batches_per_epoch(0) == 0 {
            return Err(TrainError::Config(format!(
                "clips hold fewer than {sequences} labelled runs of {length} frames"
            )));
        }
        Ok(Self { batcher, epochs: Vec::new() })
    }

    pub fn batch(&mut self, step: u64) -> Result<SequenceBatch, TrainError> {
        loop {
            if let Some(&(epoch, first, _)) = self.epochs.iter().find(|(_, f, c)| step >= *f && step < f + *c as u64) {
                return Ok(self.batcher.batch_at(epoch, (step - first) as usize).expect("index within epoch"));
            }
            let (epoch, first) = match self.epochs.last() {
                Some(&(e, f, c)) => (e + 1, f + c as u64),
                None => (0, 0),
            };
            let count = self.batcher.batches_per_epoch(epoch);
            if count == 0 {
                return Err(TrainError::Config(format!("epoch {epoch} yields no full batch")));
            }
            self.epochs.push((epoch, first, count));
        }
    }
}

/// Clips straight from an in-memory synthetic corpus, skipping the disk
/// round trip. Frames are used at the resolution they were rendered at.
pub fn synth_clips(corpus: &SynthCorpus, required_annotators: usize) -> Result<Vec<LabelledClip>, TrainError> {
    corpus
        .videos
        .iter()
        .map(|v| {
            let records: Vec<_> = corpus.annotations.iter().filter(|r| r.video_id == v.meta.video_id).cloned().collect();
            let labels = consolidate(&records, required_annotators);
            let frames = labels.iter().map(|l| ImageTensor::from_rgb8(&v.frames[l.frame_index as usize])).collect();
            Ok(LabelledClip::new(v.meta.video_id.clone(), frames, labels)?)
        })
        .collect()
}
