//! Face crops, intensity normalization, sequence batching and the synthetic
//! face corpus used for desk-scale experiments.

mod batches;
pub mod corpus;
mod image;
pub mod synth;

pub use self::batches::{LabelledClip, SequenceBatch, SequenceBatcher, Window};
pub use self::image::{
    bilinear_resize, crop_and_resize, crop_and_resize_rgb, decode_png, encode_png,
    check_unit_range, CropBox, CropProvider, FullFrameCrop, ImageTensor, Resolution,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("image decode: {0}")]
    Decode(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
