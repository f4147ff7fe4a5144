use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// FACS action units handled by the pipeline, in canonical order.
pub const AU_IDS: [u8; 8] = [1, 2, 4, 6, 12, 15, 20, 25];
pub const NUM_AUS: usize = AU_IDS.len();
pub const NUM_EXPRESSIONS: usize = 7;

/// A point in the valence-arousal plane. Both components lie in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaPair {
    pub valence: f64,
    pub arousal: f64,
}

impl VaPair {
    pub fn new(valence: f64, arousal: f64) -> Result<Self, DatasetError> {
        for (name, v) in [("valence", valence), ("arousal", arousal)] {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(DatasetError::Validation(format!(
                    "{name} {v} outside [-1, 1]"
                )));
            }
        }
        Ok(Self { valence, arousal })
    }

    /// Builds a pair by clamping both components into range.
    pub fn clamped(valence: f64, arousal: f64) -> Self {
        Self {
            valence: valence.clamp(-1.0, 1.0),
            arousal: arousal.clamp(-1.0, 1.0),
        }
    }
}

/// Binary occurrence of the eight action units, indexed in [`AU_IDS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AuVector([bool; NUM_AUS]);

impl AuVector {
    pub const fn from_bits(bits: [bool; NUM_AUS]) -> Self {
        Self(bits)
    }

    /// Builds a vector with the listed AU ids (e.g. `&[12, 25]`) active.
    pub fn with_active(aus: &[u8]) -> Result<Self, DatasetError> {
        let mut v = Self::default();
        for &au in aus {
            v.set(au, true)?;
        }
        Ok(v)
    }

    pub fn bits(&self) -> [bool; NUM_AUS] {
        self.0
    }

    pub fn index_of(au: u8) -> Option<usize> {
        AU_IDS.iter().position(|&a| a == au)
    }

    pub fn get(&self, au: u8) -> Option<bool> {
        Self::index_of(au).map(|i| self.0[i])
    }

    pub fn set(&mut self, au: u8, active: bool) -> Result<(), DatasetError> {
        let i = Self::index_of(au)
            .ok_or_else(|| DatasetError::Validation(format!("unknown action unit {au}")))?;
        self.0[i] = active;
        Ok(())
    }

    pub fn count_active(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    /// Bits as `0.0`/`1.0` targets.
    pub fn as_f64(&self) -> [f64; NUM_AUS] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}

/// The seven mutually exclusive basic expression categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expression {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
    Neutral,
}

impl Expression {
    pub const ALL: [Expression; NUM_EXPRESSIONS] = [
        Expression::Anger,
        Expression::Disgust,
        Expression::Fear,
        Expression::Happiness,
        Expression::Sadness,
        Expression::Surprise,
        Expression::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Expression::Anger => "anger",
            Expression::Disgust => "disgust",
            Expression::Fear => "fear",
            Expression::Happiness => "happiness",
            Expression::Sadness => "sadness",
            Expression::Surprise => "surprise",
            Expression::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| DatasetError::Validation(format!("unknown expression {s:?}")))
    }
}

/// One annotator's labels for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub frame_index: u32,
    pub annotator_id: String,
    pub va: Option<VaPair>,
    pub aus: Option<AuVector>,
    pub expression: Option<Expression>,
}

/// Ground truth for a frame after inter-annotator agreement has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedFrame {
    pub video_id: String,
    pub frame_index: u32,
    pub va: Option<VaPair>,
    pub aus: Option<AuVector>,
    pub expression: Option<Expression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub subject_id: String,
    pub frame_count: u32,
    pub fps: f64,
}

/// Frame rate every video is normalized to during preprocessing.
pub const NORMALIZED_FPS: f64 = 30.0;

/// Train/validation/test partition of video ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: BTreeSet<String>,
    #[serde(rename = "val")]
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl FromStr for SplitName {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(DatasetError::Validation(format!("unknown split {other:?}"))),
        }
    }
}

impl SplitManifest {
    pub fn videos(&self, split: SplitName) -> &BTreeSet<String> {
        match split {
            SplitName::Train => &self.train,
            SplitName::Val => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn split_of(&self, video_id: &str) -> Option<SplitName> {
        [SplitName::Train, SplitName::Val, SplitName::Test]
            .into_iter()
            .find(|&s| self.videos(s).contains(video_id))
    }

    /// Checks pairwise disjointness of the video sets and, given the video
    /// metadata, that no subject appears in more than one split.
    pub fn validate(&self, videos: &[VideoMeta]) -> Result<(), DatasetError> {
        let sets = [&self.train, &self.validation, &self.test];
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                if let Some(v) = a.intersection(b).next() {
                    return Err(DatasetError::Validation(format!(
                        "video {v} assigned to two splits"
                    )));
                }
            }
        }
        let mut owner: std::collections::BTreeMap<&str, SplitName> = Default::default();
        for meta in videos {
            let Some(split) = self.split_of(&meta.video_id) else {
                continue;
            };
            if let Some(prev) = owner.insert(&meta.subject_id, split) {
                if prev != split {
                    return Err(DatasetError::Validation(format!(
                        "subject {} appears in {prev:?} and {split:?}",
                        meta.subject_id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn va_pair_range() {
        assert!(VaPair::new(1.0, -1.0).is_ok());
        assert!(VaPair::new(1.5, 0.0).is_err());
        assert!(VaPair::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn au_vector_order() {
        let v = AuVector::with_active(&[12, 25]).unwrap();
        assert_eq!(
            v.bits(),
            [false, false, false, false, true, false, false, true]
        );
        assert_eq!(v.get(12), Some(true));
        assert_eq!(v.get(3), None);
        assert!(AuVector::with_active(&[9]).is_err());
    }

    #[test]
    fn expression_names_round_trip() {
        for e in Expression::ALL {
            assert_eq!(e.name().parse::<Expression>().unwrap(), e);
            assert_eq!(Expression::from_index(e.index()), Some(e));
        }
    }
}
