use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, SplitManifest, VideoMeta};

/// Target proportions of frames for train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, DatasetError> {
        let f = Self { train, val, test };
        let all = f.as_array();
        if all.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(DatasetError::Validation(format!(
                "split fractions must be positive, got {all:?}"
            )));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Validation(format!(
                "split fractions must sum to 1, got {all:?}"
            )));
        }
        Ok(f)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Partitions videos so that every subject's videos land in exactly one split.
///
/// Subjects are shuffled with `seed`, stably sorted by total frame count
/// (largest first) and greedily assigned to the split whose filled share of
/// its frame target is currently smallest; equal shares resolve to
/// train, then validation, then test.
pub fn split_subject_independent(
    videos: &[VideoMeta],
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitManifest, DatasetError> {
    let mut subjects: BTreeMap<&str, (u64, Vec<&str>)> = BTreeMap::new();
    for v in videos {
        let e = subjects.entry(v.subject_id.as_str()).or_default();
        e.0 += u64::from(v.frame_count);
        e.1.push(v.video_id.as_str());
    }
    if subjects.len() < 3 {
        return Err(DatasetError::Infeasible(format!(
            "{} subject(s) cannot fill three subject-disjoint splits",
            subjects.len()
        )));
    }

    let mut order: Vec<(&str, u64, Vec<&str>)> = subjects
        .into_iter()
        .map(|(s, (frames, vids))| (s, frames, vids))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.sort_by(|a, b| b.1.cmp(&a.1));

    let total: u64 = order.iter().map(|s| s.1).sum();
    let targets = fractions.as_array().map(|f| f * total.max(1) as f64);
    let mut filled = [0u64; 3];
    let mut buckets: [Vec<&str>; 3] = Default::default();
    for (_, frames, vids) in order {
        // Any split still without a subject takes precedence, so each split is non-empty.
        let pick = if let Some(empty) = buckets.iter().position(|b| b.is_empty()) {
            empty
        } else {
            let mut best = 0;
            for k in 1..3 {
                if (filled[k] as f64) / targets[k] < (filled[best] as f64) / targets[best] {
                    best = k;
                }
            }
            best
        };
        filled[pick] += frames;
        buckets[pick].extend(vids);
    }

    let [train, val, test] = buckets.map(|b| b.into_iter().map(str::to_string).collect());
    Ok(SplitManifest {
        train,
        validation: val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(subjects: usize, videos_per_subject: usize) -> Vec<VideoMeta> {
        let mut out = Vec::new();
        for s in 0..subjects {
            for v in 0..videos_per_subject {
                out.push(VideoMeta {
                    video_id: format!("s{s:02}_v{v}"),
                    subject_id: format!("s{s:02}"),
                    frame_count: 100 + (s as u32 * 37 + v as u32 * 11) % 250,
                    fps: 30.0,
                });
            }
        }
        out
    }

    #[test]
    fn single_subject_is_infeasible() {
        let mut vids = corpus(1, 4);
        vids.iter_mut().for_each(|v| v.subject_id = "only".into());
        let f = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        assert!(matches!(
            split_subject_independent(&vids, f, 1),
            Err(DatasetError::Infeasible(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let vids = corpus(30, 2);
        let f = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        let a = split_subject_independent(&vids, f, 7).unwrap();
        let b = split_subject_independent(&vids, f, 7).unwrap();
        assert_eq!(a, b);
        a.validate(&vids).unwrap();
    }

    #[test]
    fn proportions_roughly_follow_targets() {
        let vids = corpus(30, 1);
        let f = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        let m = split_subject_independent(&vids, f, 3).unwrap();
        let total: u32 = vids.iter().map(|v| v.frame_count).sum();
        let frames = |set: &std::collections::BTreeSet<String>| -> f64 {
            vids.iter()
                .filter(|v| set.contains(&v.video_id))
                .map(|v| v.frame_count)
                .sum::<u32>() as f64
                / total as f64
        };
        assert!((frames(&m.train) - 0.6).abs() < 0.05);
        assert!((frames(&m.validation) - 0.2).abs() < 0.05);
        assert!((frames(&m.test) - 0.2).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(SplitFractions::new(0.5, 0.5, 0.0).is_err());
        assert!(SplitFractions::new(0.5, 0.3, 0.3).is_err());
    }
}
