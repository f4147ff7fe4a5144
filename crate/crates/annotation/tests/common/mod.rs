#![allow(dead_code)]

use std::path::Path;

use affmt_core::dataset::{AnnotationRecord, AuVector, Expression, VaPair};
use affmt_core::preprocess::corpus::write_corpus;
use affmt_core::preprocess::synth::{synth_corpus, SynthConfig};
use affmt_core::preprocess::Resolution;

/// Two 30-frame videos (`s000_v0`, `s001_v0`) with three annotators each.
pub fn fixture_store(root: &Path) {
    let corpus = synth_corpus(&SynthConfig {
        subjects: 2,
        frames_per_video: 30,
        resolution: Resolution::R32,
        seed: 4,
        ..SynthConfig::default()
    });
    write_corpus(&corpus, root, 3).unwrap();
}

pub fn au_record(video: &str, annotator: &str, frame: u32, aus: &[u8]) -> AnnotationRecord {
    AnnotationRecord {
        video_id: video.into(),
        frame_index: frame,
        annotator_id: annotator.into(),
        va: None,
        aus: Some(AuVector::with_active(aus).unwrap()),
        expression: None,
    }
}

pub fn full_record(video: &str, annotator: &str, frame: u32) -> AnnotationRecord {
    AnnotationRecord {
        va: Some(VaPair::new(0.38, -0.35).unwrap()),
        expression: Some(Expression::Happiness),
        ..au_record(video, annotator, frame, &[12, 25])
    }
}
