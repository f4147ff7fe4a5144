mod common;

use std::fs;

use affmt_annotation::{Store, StoreError};
use affmt_core::dataset::consolidate;
use affmt_core::dataset::layout::StoreLayout;
use common::{au_record, fixture_store, full_record};

fn open() -> (tempfile::TempDir, Store) {
    let dir = tempfile::tempdir().unwrap();
    fixture_store(dir.path());
    let store = Store::open(dir.path(), 3).unwrap();
    (dir, store)
}

#[test]
fn missing_root_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(Store::open(dir.path().join("nope"), 3), Err(StoreError::MissingRoot(_))));
}

#[test]
fn empty_store_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Store::open(dir.path(), 3).unwrap().list_videos().unwrap().is_empty());
}

#[test]
fn lists_fixtures_sorted() {
    let (_d, s) = open();
    let v = s.list_videos().unwrap();
    let ids: Vec<_> = v.iter().map(|l| l.meta.video_id.as_str()).collect();
    assert_eq!(ids, ["s000_v0", "s001_v0"]);
    assert!(v.iter().all(|l| l.valid && l.meta.frame_count == 30));
}

#[test]
fn missing_frame_zero_flags_video() {
    let (d, s) = open();
    fs::remove_file(StoreLayout::new(d.path()).frame_path("s001_v0", 0)).unwrap();
    let v = s.list_videos().unwrap();
    assert!(v[0].valid);
    assert!(!v[1].valid);
    assert!(v[1].problem.as_deref().unwrap().contains("frame 0"));
}

#[test]
fn frames_match_stored_bytes() {
    let (d, s) = open();
    let stored = fs::read(StoreLayout::new(d.path()).frame_path("s000_v0", 0)).unwrap();
    assert_eq!(s.frame("s000_v0", 0).unwrap(), stored);
    assert_eq!(s.frame("s000_v0", 0).unwrap(), s.frame("s000_v0", 0).unwrap());
    assert!(matches!(s.frame("s000_v0", 30), Err(StoreError::Range { .. })));
    assert!(matches!(s.frame("missing", 0), Err(StoreError::NotFound(_))));
    assert!(matches!(s.frame("../etc", 0), Err(StoreError::NotFound(_))));
}

#[test]
fn versions_are_optimistic() {
    let (_d, s) = open();
    let recs = vec![au_record("s000_v0", "alice", 1, &[4])];
    assert_eq!(s.put_annotations("s000_v0", "alice", &recs, 0).unwrap(), 1);
    assert!(matches!(
        s.put_annotations("s000_v0", "alice", &recs, 0),
        Err(StoreError::Conflict { expected: 0, current: 1 })
    ));
    assert_eq!(s.put_annotations("s000_v0", "alice", &recs, 1).unwrap(), 2);
    // other keys are versioned independently
    assert_eq!(s.put_annotations("s000_v0", "bob", &[au_record("s000_v0", "bob", 1, &[4])], 0).unwrap(), 1);
}

#[test]
fn au_range_round_trip_and_replay() {
    let (_d, s) = open();
    let recs: Vec<_> = (10..=20).map(|f| au_record("s000_v0", "alice", f, &[4])).collect();
    s.put_annotations("s000_v0", "alice", &recs, 0).unwrap();
    let (back, version) = s.annotations("s000_v0", "alice").unwrap();
    assert_eq!(version, 1);
    assert_eq!(back, recs);
    let track = s.replay("s000_v0", "alice").unwrap();
    assert_eq!(track.len(), 30);
    for t in &track {
        assert_eq!(t.au_active(4), (10..=20).contains(&t.frame), "frame {}", t.frame);
    }
}

#[test]
fn writes_replace_only_covered_frames() {
    let (_d, s) = open();
    let first: Vec<_> = (0..5).map(|f| au_record("s000_v0", "alice", f, &[1])).collect();
    s.put_annotations("s000_v0", "alice", &first, 0).unwrap();
    s.put_annotations("s000_v0", "alice", &[au_record("s000_v0", "alice", 2, &[2])], 1).unwrap();
    let track = s.replay("s000_v0", "alice").unwrap();
    assert!(track[1].au_active(1) && !track[1].au_active(2));
    assert!(track[2].au_active(2) && !track[2].au_active(1));
}

#[test]
fn single_frame_track() {
    let (_d, s) = open();
    s.put_annotations("s000_v0", "alice", &[full_record("s000_v0", "alice", 0)], 0).unwrap();
    let track = s.replay("s000_v0", "alice").unwrap();
    assert_eq!(track.len(), 30);
    assert_eq!(track.iter().filter(|t| t.is_labelled()).count(), 1);
    assert!(track[0].is_labelled());
}

#[test]
fn replay_without_records_is_not_found() {
    let (_d, s) = open();
    assert!(matches!(s.replay("s000_v0", "nobody"), Err(StoreError::NotFound(_))));
    assert!(matches!(s.replay("missing", "alice"), Err(StoreError::NotFound(_))));
}

#[test]
fn invalid_writes_store_nothing() {
    let (_d, s) = open();
    let bad = [
        vec![au_record("s001_v0", "alice", 1, &[4])],
        vec![au_record("s000_v0", "bob", 1, &[4])],
        vec![au_record("s000_v0", "alice", 1, &[4]), au_record("s000_v0", "alice", 30, &[4])],
        vec![au_record("s000_v0", "alice", 1, &[4]), au_record("s000_v0", "alice", 1, &[1])],
    ];
    for recs in &bad {
        assert!(matches!(s.put_annotations("s000_v0", "alice", recs, 0), Err(StoreError::Validation(_))));
    }
    assert_eq!(s.annotations("s000_v0", "alice").unwrap(), (vec![], 0));
}

#[test]
fn consolidation_matches_core() {
    let (d, s) = open();
    let records = s.all_records("s000_v0").unwrap();
    assert_eq!(records.len(), 90);
    let (frames, csv) = s.run_consolidation("s000_v0").unwrap();
    assert_eq!(frames, consolidate(&records, 3));
    let persisted = fs::read_to_string(StoreLayout::new(d.path()).consolidated_path("s000_v0")).unwrap();
    assert_eq!(persisted, csv);
}

#[test]
fn unanimity_threshold_applies() {
    let dir = tempfile::tempdir().unwrap();
    fixture_store(dir.path());
    fs::remove_dir_all(dir.path().join("annotations")).unwrap();
    let s = Store::open(dir.path(), 3).unwrap();
    assert!(s.run_consolidation("s000_v0").unwrap().0.is_empty());

    for a in ["a1", "a2", "a3"] {
        s.put_annotations("s000_v0", a, &[au_record("s000_v0", a, 5, &[1])], 0).unwrap();
    }
    let (frames, _) = s.run_consolidation("s000_v0").unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].aus.unwrap().get(1), Some(true));

    for a in ["b1", "b2"] {
        s.put_annotations("s001_v0", a, &[au_record("s001_v0", a, 5, &[1])], 0).unwrap();
    }
    let (frames, _) = s.run_consolidation("s001_v0").unwrap();
    assert!(frames.iter().all(|f| f.aus.is_none()));
}

#[test]
fn concurrent_writers_linearize() {
    let (_d, s) = open();
    let s = std::sync::Arc::new(s);
    let handles: Vec<_> = (0..8u32)
        .map(|i| {
            let s = s.clone();
            std::thread::spawn(move || {
                let mut wins = 0;
                for _ in 0..20 {
                    let (_, v) = s.annotations("s000_v0", "alice").unwrap();
                    let rec = au_record("s000_v0", "alice", i, &[4]);
                    if s.put_annotations("s000_v0", "alice", &[rec], v).is_ok() {
                        wins += 1;
                    }
                }
                wins
            })
        })
        .collect();
    let wins: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
    let (recs, version) = s.annotations("s000_v0", "alice").unwrap();
    assert_eq!(version, wins);
    assert!(recs.len() <= 8 && !recs.is_empty());
}
