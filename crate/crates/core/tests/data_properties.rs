use std::collections::{BTreeMap, BTreeSet};

use affmt_core::dataset::{
    consolidate, dataset_stats, parse_annotations, read_consolidated_csv, serialize_annotations,
    split_subject_independent, write_consolidated_csv, AnnotationRecord, AuVector, DatasetError,
    Expression, Histogram, SplitFractions, VaPair, VideoMeta, AU_IDS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(frame: u32, annotator: &str, aus: [bool; 8], expr: Option<Expression>) -> AnnotationRecord {
    AnnotationRecord {
        video_id: "v".into(),
        frame_index: frame,
        annotator_id: annotator.into(),
        va: None,
        aus: Some(AuVector::from_bits(aus)),
        expression: expr,
    }
}

fn arb_record() -> impl Strategy<Value = AnnotationRecord> {
    (
        "[a-z][a-z0-9_]{0,6}",
        0u32..5000,
        "[a-z][a-z0-9]{0,4}",
        prop::option::of((-1.0f64..=1.0, -1.0f64..=1.0)),
        prop::option::of(prop::array::uniform8(any::<bool>())),
        prop::option::of(0usize..7),
    )
        .prop_map(|(video_id, frame_index, annotator_id, va, aus, e)| AnnotationRecord {
            video_id,
            frame_index,
            annotator_id,
            va: va.map(|(v, a)| VaPair::new(v, a).unwrap()),
            aus: aus.map(AuVector::from_bits),
            expression: e.and_then(Expression::from_index),
        })
}

fn dedup(records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
    let mut seen = BTreeSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert((r.video_id.clone(), r.frame_index, r.annotator_id.clone())))
        .collect()
}

/// Same record written with reordered keys and extra whitespace.
fn scrambled(r: &AnnotationRecord) -> String {
    let aus = match r.aus {
        None => "null".to_string(),
        Some(a) => {
            let parts: Vec<String> = AU_IDS
                .iter()
                .rev()
                .map(|id| format!("\"{id}\" : {}", u8::from(a.get(*id).unwrap())))
                .collect();
            format!("{{ {} }}", parts.join(" , "))
        }
    };
    let f = |v: Option<f64>| v.map_or("null".to_string(), |x| format!("{x:?}"));
    let e = r.expression.map_or("null".to_string(), |e| format!("\"{}\"", e.name()));
    format!(
        "  {{ \"expression\": {e}, \"aus\": {aus}, \"arousal\": {}, \"valence\": {}, \"annotator\": \"{}\", \"frame\": {}, \"video_id\": \"{}\" }}  ",
        f(r.va.map(|v| v.arousal)),
        f(r.va.map(|v| v.valence)),
        r.annotator_id,
        r.frame_index,
        r.video_id
    )
}

proptest! {
    #[test]
    fn jsonl_round_trip_is_byte_identical(records in prop::collection::vec(arb_record(), 0..40)) {
        let records = dedup(records);
        let canonical = serialize_annotations(&records);
        let parsed = parse_annotations(canonical.as_bytes()).unwrap();
        prop_assert_eq!(&parsed, &records);
        prop_assert_eq!(serialize_annotations(&parsed), canonical.clone());

        let messy: String = records.iter().map(|r| scrambled(r) + "\n\n").collect();
        let reparsed = parse_annotations(messy.as_bytes()).unwrap();
        prop_assert_eq!(serialize_annotations(&reparsed), canonical);
    }

    #[test]
    fn extra_inactive_vote_never_activates(
        votes in prop::collection::vec(prop::array::uniform8(any::<bool>()), 1..5),
        extra_bits in prop::array::uniform8(any::<bool>()),
        au in 0usize..8,
    ) {
        let mut records: Vec<_> = votes.iter().enumerate()
            .map(|(i, b)| record(0, &format!("a{i}"), *b, None))
            .collect();
        let required = votes.len();
        let before = consolidate(&records, required)[0].aus.unwrap().bits()[au];
        let mut extra = extra_bits;
        extra[au] = false;
        records.push(record(0, "late", extra, None));
        let after = consolidate(&records, required)[0].aus.unwrap().bits()[au];
        prop_assert!(!after);
        prop_assert!(!after || before);
    }

    #[test]
    fn consolidated_csv_round_trip(records in prop::collection::vec(arb_record(), 0..60), k in 1usize..4) {
        let frames = consolidate(&dedup(records), k);
        let csv = write_consolidated_csv(&frames).unwrap();
        prop_assert_eq!(read_consolidated_csv(&csv).unwrap(), frames);
    }
}

#[test]
fn unanimity_is_exhaustive_over_vote_patterns() {
    for au in 0..8 {
        for pattern in 0u8..8 {
            let records: Vec<_> = (0..3)
                .map(|a| {
                    let mut bits = [false; 8];
                    bits[au] = pattern >> a & 1 == 1;
                    record(1, &format!("a{a}"), bits, None)
                })
                .collect();
            let out = consolidate(&records, 3);
            assert_eq!(out.len(), 1);
            let bit = out[0].aus.unwrap().bits()[au];
            assert_eq!(bit, pattern == 7, "au index {au} pattern {pattern:03b}");
        }
    }
}

#[test]
fn expression_needs_agreement_and_quorum() {
    let h = Some(Expression::Happiness);
    let s = Some(Expression::Sadness);
    let r = |a: &str, e| record(0, a, [false; 8], e);
    let out = consolidate(&[r("a", h), r("b", h), r("c", s)], 3);
    assert_eq!(out[0].expression, None);
    let out = consolidate(&[r("a", h), r("b", h), r("c", h)], 3);
    assert_eq!(out[0].expression, h);
    let out = consolidate(&[r("a", h), r("b", h)], 3);
    assert_eq!(out[0].expression, None);
    assert_eq!(out[0].aus, None);
    let out = consolidate(&[r("a", h), r("b", h)], 2);
    assert_eq!(out[0].expression, h);
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<VideoMeta> {
    let subjects = rng.random_range(3..25);
    let mut videos = Vec::new();
    for s in 0..subjects {
        for v in 0..rng.random_range(1..4) {
            videos.push(VideoMeta {
                video_id: format!("s{s}_v{v}"),
                subject_id: format!("s{s}"),
                frame_count: rng.random_range(1..5000),
                fps: 30.0,
            });
        }
    }
    videos
}

#[test]
fn splits_are_subject_disjoint_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..200 {
        let videos = random_corpus(&mut rng);
        let a: f64 = rng.random_range(0.2..0.8);
        let b: f64 = rng.random_range(0.05..(0.95 - a));
        let fr = SplitFractions::new(a, b, 1.0 - a - b).unwrap();
        let m = split_subject_independent(&videos, fr, i).unwrap();
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        let sets = [&m.train, &m.validation, &m.test];
        for (k, set) in sets.iter().enumerate() {
            assert!(!set.is_empty());
            for v in set.iter() {
                let meta = videos.iter().find(|x| &x.video_id == v).unwrap();
                let prev = owner.insert(&meta.subject_id, k);
                assert!(prev.is_none() || prev == Some(k), "subject {} split twice", meta.subject_id);
            }
        }
        let total: usize = sets.iter().map(|s| s.len()).sum();
        assert_eq!(total, videos.len());
        m.validate(&videos).unwrap();
    }
}

#[test]
fn split_is_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let videos: Vec<VideoMeta> = (0..30)
        .map(|s| VideoMeta {
            video_id: format!("s{s:02}"),
            subject_id: format!("s{s:02}"),
            frame_count: rng.random_range(300..900),
            fps: 30.0,
        })
        .collect();
    let fr = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
    let a = split_subject_independent(&videos, fr, 1).unwrap();
    assert_eq!(a, split_subject_independent(&videos, fr, 1).unwrap());
    let b = split_subject_independent(&videos, fr, 2).unwrap();
    b.validate(&videos).unwrap();
    let single: Vec<VideoMeta> = videos.iter().map(|v| VideoMeta { subject_id: "x".into(), ..v.clone() }).collect();
    assert!(matches!(
        split_subject_independent(&single, fr, 0),
        Err(DatasetError::Infeasible(_))
    ));
}

#[test]
fn stats_match_brute_force_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..20 {
        let frames: Vec<_> = (0..100)
            .map(|i| affmt_core::ConsolidatedFrame {
                video_id: "v".into(),
                frame_index: i,
                va: rng
                    .random_bool(0.8)
                    .then(|| VaPair::clamped(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))),
                aus: rng
                    .random_bool(0.7)
                    .then(|| AuVector::from_bits(std::array::from_fn(|_| rng.random_bool(0.2)))),
                expression: rng
                    .random_bool(0.6)
                    .then(|| Expression::from_index(rng.random_range(0..7)).unwrap()),
            })
            .collect();
        let bins = rng.random_range(1..12);
        let s = dataset_stats(&frames, bins);

        for (k, au) in AU_IDS.iter().enumerate() {
            let mut n = 0;
            for f in &frames {
                if let Some(a) = f.aus {
                    if a.get(*au) == Some(true) {
                        n += 1;
                    }
                }
            }
            assert_eq!(s.au_counts[k], n);
        }
        for e in Expression::ALL {
            let n = frames.iter().filter(|f| f.expression == Some(e)).count() as u64;
            assert_eq!(s.expression_count(e), n);
        }
        let mut v_hist = vec![0u64; bins];
        for f in &frames {
            if let Some(va) = f.va {
                // bin edges at -1 + 2k/bins, last bin closed
                let mut b = 0;
                while b + 1 < bins && va.valence >= -1.0 + 2.0 * (b + 1) as f64 / bins as f64 {
                    b += 1;
                }
                v_hist[b] += 1;
            }
        }
        assert_eq!(s.valence_histogram.counts, v_hist);
        assert_eq!(s.va_joint_histogram.iter().sum::<u64>(), s.va_labelled_frames);
        let active = frames.iter().filter(|f| f.aus.is_some_and(|a| a.any())).count() as u64;
        assert_eq!(s.au_active_frames, active);
        assert_eq!(s.frames, 100);
        let _ = Histogram::bin_of(bins, 0.0);
    }
}
