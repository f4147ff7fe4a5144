#![allow(dead_code)]

use affmt_core::preprocess::synth::{synth_corpus, SynthConfig};
use affmt_core::preprocess::{LabelledClip, Resolution};
use affmt_train::data::synth_clips;
use affmt_train::{GanTrainConfig, MtTrainConfig};

pub fn clips(subjects: usize, frames: u32, seed: u64) -> Vec<LabelledClip> {
    let corpus = synth_corpus(&SynthConfig {
        subjects,
        frames_per_video: frames,
        resolution: Resolution::R32,
        seed,
        ..SynthConfig::default()
    });
    synth_clips(&corpus, 3).unwrap()
}

pub fn small_gan() -> GanTrainConfig {
    GanTrainConfig { batch: 4, ..GanTrainConfig::default() }
}

pub fn small_mt() -> MtTrainConfig {
    MtTrainConfig {
        input_size: 32,
        feature_units: 16,
        gru_units: 16,
        attention_units: 8,
        attention_length: 4,
        sequences: 2,
        sequence_length: 8,
        ..MtTrainConfig::default()
    }
}
