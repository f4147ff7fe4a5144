use std::collections::BTreeMap;

use super::{AnnotationRecord, AuVector, ConsolidatedFrame, VaPair, NUM_AUS};

pub const DEFAULT_REQUIRED_ANNOTATORS: usize = 3;

/// Fuses per-annotator records into one ground-truth frame per
/// `(video_id, frame_index)`, sorted by that key.
///
/// * AU family: present only when at least `required_annotators` records carry
///   AU labels; a bit is set iff every contributing annotator set it.
/// * Expression: present only when at least `required_annotators` records
///   carry an expression and all of them agree.
/// * VA: arithmetic mean of every annotator's VA, clamped to `[-1, 1]`.
///   Absent when no annotator supplied VA.
pub fn consolidate(records: &[AnnotationRecord], required_annotators: usize) -> Vec<ConsolidatedFrame> {
    let required = required_annotators.max(1);
    let mut groups: BTreeMap<(&str, u32), Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.video_id.as_str(), r.frame_index))
            .or_default()
            .push(r);
    }

    groups
        .into_iter()
        .map(|((video_id, frame_index), group)| ConsolidatedFrame {
            video_id: video_id.to_string(),
            frame_index,
            va: fuse_va(&group),
            aus: fuse_aus(&group, required),
            expression: fuse_expression(&group, required),
        })
        .collect()
}

fn fuse_va(group: &[&AnnotationRecord]) -> Option<VaPair> {
    let (mut sv, mut sa, mut n) = (0.0, 0.0, 0usize);
    for va in group.iter().filter_map(|r| r.va) {
        sv += va.valence;
        sa += va.arousal;
        n += 1;
    }
    (n > 0).then(|| VaPair::clamped(sv / n as f64, sa / n as f64))
}

fn fuse_aus(group: &[&AnnotationRecord], required: usize) -> Option<AuVector> {
    let votes: Vec<AuVector> = group.iter().filter_map(|r| r.aus).collect();
    if votes.len() < required {
        return None;
    }
    let mut bits = [true; NUM_AUS];
    for v in &votes {
        for (b, vote) in bits.iter_mut().zip(v.bits()) {
            *b &= vote;
        }
    }
    Some(AuVector::from_bits(bits))
}

fn fuse_expression(
    group: &[&AnnotationRecord],
    required: usize,
) -> Option<super::Expression> {
    let votes: Vec<_> = group.iter().filter_map(|r| r.expression).collect();
    if votes.len() < required {
        return None;
    }
    let first = votes[0];
    votes.iter().all(|&e| e == first).then_some(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Expression;

    fn rec(annotator: &str, frame: u32, aus: &[u8], expr: Option<Expression>) -> AnnotationRecord {
        AnnotationRecord {
            video_id: "v".into(),
            frame_index: frame,
            annotator_id: annotator.into(),
            va: None,
            aus: Some(AuVector::with_active(aus).unwrap()),
            expression: expr,
        }
    }

    #[test]
    fn unanimous_au_kept() {
        let recs = [rec("a", 0, &[1], None), rec("b", 0, &[1], None), rec("c", 0, &[1], None)];
        let out = consolidate(&recs, 3);
        assert_eq!(out[0].aus.unwrap().get(1), Some(true));
    }

    #[test]
    fn split_vote_dropped() {
        let recs = [rec("a", 0, &[1], None), rec("b", 0, &[1], None), rec("c", 0, &[], None)];
        let out = consolidate(&recs, 3);
        assert_eq!(out[0].aus.unwrap().get(1), Some(false));
    }

    #[test]
    fn expression_needs_full_agreement() {
        use Expression::*;
        let recs = [
            rec("a", 0, &[], Some(Happiness)),
            rec("b", 0, &[], Some(Happiness)),
            rec("c", 0, &[], Some(Sadness)),
        ];
        assert_eq!(consolidate(&recs, 3)[0].expression, None);
        let recs = [
            rec("a", 0, &[], Some(Happiness)),
            rec("b", 0, &[], Some(Happiness)),
            rec("c", 0, &[], Some(Happiness)),
        ];
        assert_eq!(consolidate(&recs, 3)[0].expression, Some(Happiness));
    }

    #[test]
    fn too_few_annotators_omits_family() {
        let recs = [rec("a", 0, &[1], None), rec("b", 0, &[1], None)];
        let out = consolidate(&recs, 3);
        assert_eq!(out[0].aus, None);
        assert_eq!(consolidate(&recs, 2)[0].aus.unwrap().get(1), Some(true));
    }

    #[test]
    fn va_is_clamped_mean() {
        let mut recs = vec![rec("a", 0, &[], None), rec("b", 0, &[], None)];
        recs[0].va = Some(VaPair::new(0.2, -0.4).unwrap());
        recs[1].va = Some(VaPair::new(0.6, 0.0).unwrap());
        let va = consolidate(&recs, 3)[0].va.unwrap();
        assert!((va.valence - 0.4).abs() < 1e-15);
        assert!((va.arousal + 0.2).abs() < 1e-15);
    }

    #[test]
    fn output_sorted_by_key() {
        let recs = [rec("a", 5, &[], None), rec("a", 1, &[], None)];
        let frames: Vec<u32> = consolidate(&recs, 1).iter().map(|f| f.frame_index).collect();
        assert_eq!(frames, vec![1, 5]);
    }
}
