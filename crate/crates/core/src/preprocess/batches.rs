use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ImageTensor, PreprocessError};
use crate::dataset::{AuVector, ConsolidatedFrame, Expression};

/// One video's preprocessed frames alongside their consolidated labels.
/// `frames[i]` belongs to `labels[i]`; labels are ordered by frame index.
#[derive(Debug, Clone)]
pub struct LabelledClip {
    pub video_id: String,
    pub frames: Vec<ImageTensor>,
    pub labels: Vec<ConsolidatedFrame>,
}

impl LabelledClip {
    pub fn new(
        video_id: impl Into<String>,
        frames: Vec<ImageTensor>,
        labels: Vec<ConsolidatedFrame>,
    ) -> Result<Self, PreprocessError> {
        if frames.len() != labels.len() {
            return Err(PreprocessError::Validation(format!(
                "{} frames but {} label rows",
                frames.len(),
                labels.len()
            )));
        }
        if labels.windows(2).any(|w| w[0].frame_index >= w[1].frame_index) {
            return Err(PreprocessError::Validation(
                "label rows must be strictly increasing in frame index".into(),
            ));
        }
        if let Some(f) = frames.windows(2).find(|w| {
            (w[0].height(), w[0].width()) != (w[1].height(), w[1].width())
        }) {
            return Err(PreprocessError::Validation(format!(
                "mixed frame sizes in clip ({}x{} vs {}x{})",
                f[0].height(),
                f[0].width(),
                f[1].height(),
                f[1].width()
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            frames,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Maximal runs `[start, end)` of consecutive frame indices that all carry VA.
    fn va_runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for i in 0..self.labels.len() {
            let contiguous = i > 0 && self.labels[i].frame_index == self.labels[i - 1].frame_index + 1;
            let has_va = self.labels[i].va.is_some();
            if let Some(s) = start {
                if !(has_va && contiguous) {
                    runs.push((s, i));
                    start = None;
                }
            }
            if has_va && start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            runs.push((s, self.labels.len()));
        }
        runs
    }
}

/// A `length`-frame window starting at position `start` of clip `clip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub clip: usize,
    pub start: usize,
}

/// `sequences x length` frames, sequence-major. Pixels are NHWC with
/// `N = sequences * length`.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub sequences: usize,
    pub length: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub va: Vec<[f64; 2]>,
    pub expression: Vec<Option<Expression>>,
    pub aus: Vec<Option<AuVector>>,
    pub windows: Vec<Window>,
}

impl SequenceBatch {
    pub fn frames(&self) -> usize {
        self.sequences * self.length
    }

    pub fn expression_indices(&self) -> Vec<Option<usize>> {
        self.expression.iter().map(|e| e.map(Expression::index)).collect()
    }
}

/// Cuts VA-labelled runs into non-overlapping windows and groups them into
/// batches of `sequences` windows. Window offsets and order depend only on
/// `(seed, epoch)`; a trailing partial batch is dropped.
#[derive(Debug)]
pub struct SequenceBatcher<'a> {
    clips: &'a [LabelledClip],
    sequences: usize,
    length: usize,
    seed: u64,
}

impl<'a> SequenceBatcher<'a> {
    pub fn new(
        clips: &'a [LabelledClip],
        sequences: usize,
        length: usize,
        seed: u64,
    ) -> Result<Self, PreprocessError> {
        if sequences == 0 || length == 0 {
            return Err(PreprocessError::Validation(
                "sequences per batch and sequence length must be positive".into(),
            ));
        }
        Ok(Self {
            clips,
            sequences,
            length,
            seed,
        })
    }

    fn rng(&self, epoch: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        rng
    }

    pub fn windows(&self, epoch: u64) -> Vec<Window> {
        let mut rng = self.rng(epoch);
        let t = self.length;
        let mut out = Vec::new();
        for (ci, clip) in self.clips.iter().enumerate() {
            for (s, e) in clip.va_runs() {
                let len = e - s;
                if len < t {
                    continue;
                }
                let offset = rng.random_range(0..=len % t);
                let mut start = s + offset;
                while start + t <= e {
                    out.push(Window { clip: ci, start });
                    start += t;
                }
            }
        }
        out.shuffle(&mut rng);
        out
    }

    pub fn batches_per_epoch(&self, epoch: u64) -> usize {
        self.windows(epoch).len() / self.sequences
    }

    pub fn epoch(&self, epoch: u64) -> impl Iterator<Item = SequenceBatch> + '_ {
        let windows = self.windows(epoch);
        if windows.len() < self.sequences {
            log::warn!(
                "epoch {epoch}: {} windows of length {} cannot fill a batch of {} sequences",
                windows.len(),
                self.length,
                self.sequences
            );
        }
        let full = windows.len() / self.sequences;
        let chunks: Vec<Vec<Window>> = windows
            .chunks(self.sequences)
            .take(full)
            .map(<[Window]>::to_vec)
            .collect();
        chunks.into_iter().map(move |w| self.assemble(w))
    }

    /// Batch `index` of `epoch`, identical to the `index`-th item of
    /// [`Self::epoch`].
    pub fn batch_at(&self, epoch: u64, index: usize) -> Option<SequenceBatch> {
        let windows = self.windows(epoch);
        let start = index.checked_mul(self.sequences)?;
        let end = start.checked_add(self.sequences)?;
        (end <= windows.len()).then(|| self.assemble(windows[start..end].to_vec()))
    }

    fn assemble(&self, windows: Vec<Window>) -> SequenceBatch {
        let first = &self.clips[windows[0].clip].frames[windows[0].start];
        let (height, width) = (first.height(), first.width());
        let n = self.sequences * self.length;
        let mut b = SequenceBatch {
            sequences: self.sequences,
            length: self.length,
            height,
            width,
            pixels: Vec::with_capacity(n * height * width * ImageTensor::CHANNELS),
            va: Vec::with_capacity(n),
            expression: Vec::with_capacity(n),
            aus: Vec::with_capacity(n),
            windows: Vec::new(),
        };
        for w in &windows {
            let clip = &self.clips[w.clip];
            for i in w.start..w.start + self.length {
                b.pixels.extend_from_slice(clip.frames[i].data());
                let label = &clip.labels[i];
                let va = label.va.expect("windows only cover VA-labelled runs");
                b.va.push([va.valence, va.arousal]);
                b.expression.push(label.expression);
                b.aus.push(label.aus);
            }
        }
        b.windows = windows;
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VaPair;

    fn clip(id: &str, n: u32, gap_at: Option<u32>) -> LabelledClip {
        let mut frames = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let v = (i as f32 / n as f32) * 2.0 - 1.0;
            frames.push(ImageTensor::new(2, 2, vec![v; 12]).unwrap());
            labels.push(ConsolidatedFrame {
                video_id: id.into(),
                frame_index: i,
                va: if Some(i) == gap_at { None } else { Some(VaPair::clamped(0.1, 0.2)) },
                aus: None,
                expression: Some(Expression::Neutral),
            });
        }
        LabelledClip::new(id, frames, labels).unwrap()
    }

    #[test]
    fn same_seed_epoch_same_batches() {
        let clips = vec![clip("a", 50, None), clip("b", 37, Some(10))];
        let b = SequenceBatcher::new(&clips, 2, 5, 9).unwrap();
        assert_eq!(b.windows(3), b.windows(3));
        assert_ne!(b.windows(3), b.windows(4));
    }

    #[test]
    fn windows_are_disjoint_and_labelled() {
        let clips = vec![clip("a", 50, Some(20)), clip("b", 37, None)];
        let b = SequenceBatcher::new(&clips, 3, 6, 1).unwrap();
        let w = b.windows(0);
        let mut used = std::collections::HashSet::new();
        for win in &w {
            for i in win.start..win.start + 6 {
                assert!(used.insert((win.clip, i)));
                assert!(clips[win.clip].labels[i].va.is_some());
            }
        }
        for batch in b.epoch(0) {
            assert_eq!(batch.va.len(), 18);
            assert_eq!(batch.pixels.len(), 18 * 12);
        }
        assert_eq!(b.epoch(0).count(), w.len() / 3);
        for (i, batch) in b.epoch(0).enumerate() {
            assert_eq!(b.batch_at(0, i).unwrap().windows, batch.windows);
        }
        assert!(b.batch_at(0, w.len() / 3).is_none());
    }

    #[test]
    fn too_short_gives_no_batches() {
        let clips = vec![clip("a", 4, None)];
        let b = SequenceBatcher::new(&clips, 1, 5, 0).unwrap();
        assert_eq!(b.epoch(0).count(), 0);
    }

    #[test]
    fn mismatched_clip_rejected() {
        let c = clip("a", 3, None);
        assert!(LabelledClip::new("a", c.frames[..2].to_vec(), c.labels.clone()).is_err());
    }
}
