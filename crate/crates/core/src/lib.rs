//! Data model, preprocessing, training objectives and evaluation metrics for
//! joint valence-arousal, action-unit and basic-expression recognition.
//!
//! The crate is deliberately free of any neural-network machinery: everything
//! here operates on plain slices and value types so it can be reused by the
//! trainers, the annotation backend and the command-line tools alike.

pub mod dataset;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod preprocess;

pub use dataset::{
    AnnotationRecord, AuVector, ConsolidatedFrame, DatasetError, Expression, SplitManifest,
    VaPair, VideoMeta, AU_IDS, NUM_AUS, NUM_EXPRESSIONS,
};
