//! Reading and writing corpora in the store layout.

use std::fs;
use std::path::Path;

use super::synth::SynthCorpus;
use super::{crop_and_resize_rgb, decode_png, encode_png, CropProvider, LabelledClip, PreprocessError, Resolution};
use crate::dataset::layout::{validate_id, StoreLayout};
use crate::dataset::{
    consolidate, parse_annotations, read_consolidated_csv, serialize_annotations, write_consolidated_csv,
    AnnotationRecord, ConsolidatedFrame, DatasetError, SplitManifest, VideoMeta,
};

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PreprocessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes frames, per-annotator JSONL, version files and consolidated CSVs.
pub fn write_corpus(
    corpus: &SynthCorpus,
    root: &Path,
    required_annotators: usize,
) -> Result<(), PreprocessError> {
    let layout = StoreLayout::new(root);
    for v in &corpus.videos {
        let id = &v.meta.video_id;
        validate_id("video", id)?;
        write_atomic(
            &layout.meta_path(id),
            serde_json::to_vec_pretty(&v.meta).map_err(DatasetError::from)?.as_slice(),
        )?;
        fs::create_dir_all(layout.frames_dir(id))?;
        for (i, f) in v.frames.iter().enumerate() {
            fs::write(layout.frame_path(id, i as u32), encode_png(f))?;
        }
        let records: Vec<AnnotationRecord> = corpus
            .annotations
            .iter()
            .filter(|r| &r.video_id == id)
            .cloned()
            .collect();
        for a in &corpus.annotator_ids {
            validate_id("annotator", a)?;
            let mine: Vec<AnnotationRecord> =
                records.iter().filter(|r| &r.annotator_id == a).cloned().collect();
            write_atomic(&layout.annotation_path(id, a), serialize_annotations(&mine).as_bytes())?;
            write_atomic(&layout.version_path(id, a), b"1")?;
        }
        let frames = consolidate(&records, required_annotators);
        write_atomic(&layout.consolidated_path(id), write_consolidated_csv(&frames)?.as_bytes())?;
    }
    Ok(())
}

/// Video metadata for every directory under `videos/`, sorted by id.
pub fn list_videos(root: &Path) -> Result<Vec<VideoMeta>, PreprocessError> {
    let layout = StoreLayout::new(root);
    let mut out = Vec::new();
    let dir = layout.videos_dir();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let id = entry.file_name().to_string_lossy().into_owned();
        let text = fs::read(layout.meta_path(&id))?;
        let meta: VideoMeta = serde_json::from_slice(&text).map_err(DatasetError::from)?;
        if meta.video_id != id {
            return Err(PreprocessError::Validation(format!(
                "meta.json in {id} names video {}",
                meta.video_id
            )));
        }
        out.push(meta);
    }
    out.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(out)
}

/// All annotation records stored for `video_id`, across annotators.
pub fn read_annotations(root: &Path, video_id: &str) -> Result<Vec<AnnotationRecord>, PreprocessError> {
    let dir = StoreLayout::new(root).annotations_dir(video_id);
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    for p in paths {
        out.extend(parse_annotations(&fs::read(&p)?)?);
    }
    Ok(out)
}

/// Consolidated labels for a video, from the CSV if present, otherwise
/// consolidated on the fly from the raw annotations.
pub fn consolidated_labels(
    root: &Path,
    video_id: &str,
    required_annotators: usize,
) -> Result<Vec<ConsolidatedFrame>, PreprocessError> {
    let path = StoreLayout::new(root).consolidated_path(video_id);
    if path.exists() {
        Ok(read_consolidated_csv(&fs::read_to_string(path)?)?)
    } else {
        Ok(consolidate(&read_annotations(root, video_id)?, required_annotators))
    }
}

pub fn read_split(root: &Path) -> Result<SplitManifest, PreprocessError> {
    let text = fs::read(StoreLayout::new(root).split_path())?;
    Ok(serde_json::from_slice(&text).map_err(DatasetError::from)?)
}

pub fn write_split(root: &Path, split: &SplitManifest) -> Result<(), PreprocessError> {
    let bytes = serde_json::to_vec_pretty(split).map_err(DatasetError::from)?;
    write_atomic(&StoreLayout::new(root).split_path(), &bytes)
}

/// Loads one video's labelled frames at `resolution`. Frames the crop
/// provider finds no face in are skipped.
pub fn load_clip(
    root: &Path,
    meta: &VideoMeta,
    resolution: Resolution,
    crops: &dyn CropProvider,
    required_annotators: usize,
) -> Result<LabelledClip, PreprocessError> {
    let layout = StoreLayout::new(root);
    let labels = consolidated_labels(root, &meta.video_id, required_annotators)?;
    let mut frames = Vec::with_capacity(labels.len());
    let mut kept = Vec::with_capacity(labels.len());
    for label in labels {
        if label.frame_index >= meta.frame_count {
            return Err(PreprocessError::Validation(format!(
                "{}: label for frame {} beyond frame count {}",
                meta.video_id, label.frame_index, meta.frame_count
            )));
        }
        let img = decode_png(&fs::read(layout.frame_path(&meta.video_id, label.frame_index))?)?;
        let Some(b) = crops.face_box(&img) else {
            log::debug!("{}: no face in frame {}", meta.video_id, label.frame_index);
            continue;
        };
        frames.push(crop_and_resize_rgb(&img, b, resolution)?);
        kept.push(label);
    }
    LabelledClip::new(meta.video_id.clone(), frames, kept)
}

pub fn load_clips(
    root: &Path,
    video_ids: impl IntoIterator<Item = impl AsRef<str>>,
    resolution: Resolution,
    crops: &dyn CropProvider,
    required_annotators: usize,
) -> Result<Vec<LabelledClip>, PreprocessError> {
    let metas = list_videos(root)?;
    video_ids
        .into_iter()
        .map(|id| {
            let id = id.as_ref();
            let meta = metas.iter().find(|m| m.video_id == id).ok_or_else(|| {
                PreprocessError::Validation(format!("unknown video {id}"))
            })?;
            load_clip(root, meta, resolution, crops, required_annotators)
        })
        .collect()
}
