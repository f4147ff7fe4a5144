//! On-disk layout shared by the annotation store, the synthetic corpus writer
//! and the corpus loader:
//!
//! ```text
//! <root>/videos/<video_id>/meta.json
//! <root>/videos/<video_id>/frames/000000.png ...
//! <root>/annotations/<video_id>/<annotator_id>.jsonl
//! <root>/annotations/<video_id>/<annotator_id>.version
//! <root>/consolidated/<video_id>.csv
//! <root>/split.json
//! ```

use std::path::{Path, PathBuf};

use super::DatasetError;

#[derive(Debug, Clone)]
pub struct StoreLayout {
    root: PathBuf,
}

impl StoreLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn videos_dir(&self) -> PathBuf {
        self.root.join("videos")
    }

    pub fn video_dir(&self, video_id: &str) -> PathBuf {
        self.videos_dir().join(video_id)
    }

    pub fn meta_path(&self, video_id: &str) -> PathBuf {
        self.video_dir(video_id).join("meta.json")
    }

    pub fn frames_dir(&self, video_id: &str) -> PathBuf {
        self.video_dir(video_id).join("frames")
    }

    pub fn frame_path(&self, video_id: &str, frame_index: u32) -> PathBuf {
        self.frames_dir(video_id).join(format!("{frame_index:06}.png"))
    }

    pub fn annotations_dir(&self, video_id: &str) -> PathBuf {
        self.root.join("annotations").join(video_id)
    }

    pub fn annotation_path(&self, video_id: &str, annotator_id: &str) -> PathBuf {
        self.annotations_dir(video_id)
            .join(format!("{annotator_id}.jsonl"))
    }

    pub fn version_path(&self, video_id: &str, annotator_id: &str) -> PathBuf {
        self.annotations_dir(video_id)
            .join(format!("{annotator_id}.version"))
    }

    pub fn consolidated_dir(&self) -> PathBuf {
        self.root.join("consolidated")
    }

    pub fn consolidated_path(&self, video_id: &str) -> PathBuf {
        self.consolidated_dir().join(format!("{video_id}.csv"))
    }

    pub fn split_path(&self) -> PathBuf {
        self.root.join("split.json")
    }
}

/// Identifiers become path components, so they are restricted to a safe alphabet.
pub fn validate_id(kind: &str, id: &str) -> Result<(), DatasetError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(DatasetError::Validation(format!("invalid {kind} id {id:?}")))
    }
}
