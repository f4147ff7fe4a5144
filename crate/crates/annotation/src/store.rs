use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use affmt_core::dataset::layout::{validate_id, StoreLayout};
use affmt_core::dataset::{
    consolidate, parse_annotations, serialize_annotations, write_consolidated_csv, AnnotationRecord, AuVector,
    ConsolidatedFrame, DatasetError, AU_IDS, Expression, VaPair, VideoMeta,
};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("frame {index} out of range for {video} ({count} frames)")]
    Range { video: String, index: u32, count: u32 },
    #[error("version conflict: expected {expected}, store is at {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Storage(e.to_string())
    }
}

impl From<DatasetError> for StoreError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(e) => StoreError::Storage(e.to_string()),
            other => StoreError::Validation(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, StoreError>;

/// A registered video and whether its frame directory is complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoListing {
    #[serde(flatten)]
    pub meta: VideoMeta,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
}

/// One frame of a replay track; all fields are `None` on unlabelled frames.
/// `aus` lists the ids of the active units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackEntry {
    pub frame: u32,
    pub va: Option<VaPair>,
    pub aus: Option<Vec<u8>>,
    pub expression: Option<Expression>,
}

impl TrackEntry {
    pub fn is_labelled(&self) -> bool {
        self.va.is_some() || self.aus.is_some() || self.expression.is_some()
    }

    pub fn au_active(&self, au: u8) -> bool {
        self.aus.as_ref().is_some_and(|a| a.contains(&au))
    }
}

fn active_ids(aus: &AuVector) -> Vec<u8> {
    AU_IDS.iter().zip(aus.bits()).filter(|(_, on)| *on).map(|(id, _)| *id).collect()
}

#[derive(Debug)]
pub struct Store {
    layout: StoreLayout,
    required_annotators: usize,
    locks: Mutex<HashMap<(String, String), Arc<Mutex<()>>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>, required_annotators: usize) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::MissingRoot(root));
        }
        if required_annotators == 0 {
            return Err(StoreError::Validation("required_annotators must be positive".into()));
        }
        Ok(Self { layout: StoreLayout::new(root), required_annotators, locks: Mutex::default() })
    }

    pub fn root(&self) -> &Path {
        self.layout.root()
    }

    pub fn required_annotators(&self) -> usize {
        self.required_annotators
    }

    /// All videos with a readable `meta.json`, sorted by id.
    pub fn list_videos(&self) -> Result<Vec<VideoListing>> {
        let dir = self.layout.videos_dir();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            let meta = self.meta(&id)?;
            let missing = (0..meta.frame_count).find(|&i| !self.layout.frame_path(&id, i).is_file());
            out.push(VideoListing {
                valid: missing.is_none(),
                problem: missing.map(|i| format!("frame {i} is missing")),
                meta,
            });
        }
        out.sort_by(|a, b| a.meta.video_id.cmp(&b.meta.video_id));
        Ok(out)
    }

    pub fn meta(&self, video_id: &str) -> Result<VideoMeta> {
        validate_id("video", video_id).map_err(|_| StoreError::NotFound(format!("video {video_id}")))?;
        let bytes = match fs::read(self.layout.meta_path(video_id)) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Err(StoreError::NotFound(format!("video {video_id}")));
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Storage(format!("{video_id}/meta.json: {e}")))
    }

    /// Stored PNG bytes of one frame.
    pub fn frame(&self, video_id: &str, index: u32) -> Result<Vec<u8>> {
        let meta = self.meta(video_id)?;
        if index >= meta.frame_count {
            return Err(StoreError::Range { video: video_id.into(), index, count: meta.frame_count });
        }
        match fs::read(self.layout.frame_path(video_id, index)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == ErrorKind::NotFound => {
                Err(StoreError::Storage(format!("{video_id}: frame {index} is missing")))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn key_lock(&self, video_id: &str, annotator_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry((video_id.to_string(), annotator_id.to_string())).or_default().clone()
    }

    fn read_version(&self, video_id: &str, annotator_id: &str) -> Result<u64> {
        match fs::read_to_string(self.layout.version_path(video_id, annotator_id)) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| StoreError::Storage(format!("corrupt version file for {video_id}/{annotator_id}"))),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e.into()),
        }
    }

    fn read_records(&self, video_id: &str, annotator_id: &str) -> Result<Option<Vec<AnnotationRecord>>> {
        match fs::read(self.layout.annotation_path(video_id, annotator_id)) {
            Ok(b) => Ok(Some(parse_annotations(&b)?)),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn check_pair(&self, video_id: &str, annotator_id: &str) -> Result<VideoMeta> {
        let meta = self.meta(video_id)?;
        validate_id("annotator", annotator_id)?;
        Ok(meta)
    }

    /// One annotator's records for a video and the current version. A pair
    /// that was never written reads as empty at version 0.
    pub fn annotations(&self, video_id: &str, annotator_id: &str) -> Result<(Vec<AnnotationRecord>, u64)> {
        self.check_pair(video_id, annotator_id)?;
        let lock = self.key_lock(video_id, annotator_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let records = self.read_records(video_id, annotator_id)?.unwrap_or_default();
        Ok((records, self.read_version(video_id, annotator_id)?))
    }

    /// Replaces the annotator's labels on the frames `records` cover and
    /// returns the new version. Fails without writing on a stale
    /// `expected_version` or any invalid record.
    pub fn put_annotations(
        &self,
        video_id: &str,
        annotator_id: &str,
        records: &[AnnotationRecord],
        expected_version: u64,
    ) -> Result<u64> {
        let meta = self.check_pair(video_id, annotator_id)?;
        let mut incoming = BTreeMap::new();
        for r in records {
            if r.video_id != video_id || r.annotator_id != annotator_id {
                return Err(StoreError::Validation(format!(
                    "record for {}/{} sent to {video_id}/{annotator_id}",
                    r.video_id, r.annotator_id
                )));
            }
            if r.frame_index >= meta.frame_count {
                return Err(StoreError::Validation(format!(
                    "frame {} beyond frame count {}",
                    r.frame_index, meta.frame_count
                )));
            }
            if incoming.insert(r.frame_index, r.clone()).is_some() {
                return Err(StoreError::Validation(format!("frame {} given twice", r.frame_index)));
            }
        }

        let lock = self.key_lock(video_id, annotator_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let current = self.read_version(video_id, annotator_id)?;
        if current != expected_version {
            return Err(StoreError::Conflict { expected: expected_version, current });
        }
        let mut merged: BTreeMap<u32, AnnotationRecord> = self
            .read_records(video_id, annotator_id)?
            .unwrap_or_default()
            .into_iter()
            .map(|r| (r.frame_index, r))
            .collect();
        merged.extend(incoming);
        let merged: Vec<AnnotationRecord> = merged.into_values().collect();
        write_atomic(&self.layout.annotation_path(video_id, annotator_id), serialize_annotations(&merged).as_bytes())?;
        let next = current + 1;
        write_atomic(&self.layout.version_path(video_id, annotator_id), next.to_string().as_bytes())?;
        Ok(next)
    }

    /// Dense per-frame track of one annotator's labels.
    pub fn replay(&self, video_id: &str, annotator_id: &str) -> Result<Vec<TrackEntry>> {
        let meta = self.check_pair(video_id, annotator_id)?;
        let records = match self.read_records(video_id, annotator_id)? {
            Some(r) if !r.is_empty() => r,
            _ => return Err(StoreError::NotFound(format!("annotations of {annotator_id} for {video_id}"))),
        };
        let mut track: Vec<TrackEntry> = (0..meta.frame_count)
            .map(|frame| TrackEntry { frame, va: None, aus: None, expression: None })
            .collect();
        for r in records {
            if let Some(t) = track.get_mut(r.frame_index as usize) {
                t.va = r.va;
                t.aus = r.aus.as_ref().map(active_ids);
                t.expression = r.expression;
            }
        }
        Ok(track)
    }

    /// Annotator ids with a label file for `video_id`, sorted.
    pub fn annotators(&self, video_id: &str) -> Result<Vec<String>> {
        self.meta(video_id)?;
        let dir = self.layout.annotations_dir(video_id);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem() {
                    ids.push(stem.to_string_lossy().into_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Every annotator's records for `video_id`, in annotator order.
    pub fn all_records(&self, video_id: &str) -> Result<Vec<AnnotationRecord>> {
        let mut all = Vec::new();
        for a in self.annotators(video_id)? {
            all.extend(self.annotations(video_id, &a)?.0);
        }
        Ok(all)
    }

    /// Consolidates all annotators' labels and persists the CSV.
    pub fn run_consolidation(&self, video_id: &str) -> Result<(Vec<ConsolidatedFrame>, String)> {
        let frames = consolidate(&self.all_records(video_id)?, self.required_annotators);
        let csv = write_consolidated_csv(&frames)?;
        write_atomic(&self.layout.consolidated_path(video_id), csv.as_bytes())?;
        Ok((frames, csv))
    }
}
