mod common;

use affmt_train::data::FramePool;
use affmt_train::{GanTrainer, MtTrainer, TrainError};
use common::{clips, small_gan, small_mt};

#[test]
fn gan_resume_reproduces_losses() {
    let c = clips(2, 40, 1);
    let pool = FramePool::new(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut a = GanTrainer::new(small_gan(), 11).unwrap();
    for s in 0..3 {
        a.train_step(&pool.batch_for_step(11, s, 4)).unwrap();
    }
    a.save(dir.path()).unwrap();
    let mut b = GanTrainer::load(dir.path(), Some((&small_gan(), 11))).unwrap();
    assert_eq!(b.step, 3);
    for s in 3..13 {
        let batch = pool.batch_for_step(11, s, 4);
        let ra = a.train_step(&batch).unwrap();
        let rb = b.train_step(&batch).unwrap();
        assert!((ra.generator.total - rb.generator.total).abs() <= 1e-10);
        assert_eq!(ra.discriminator.map(|d| d.bundle.total), rb.discriminator.map(|d| d.bundle.total));
    }
    assert_eq!(a.generator.net.flat_state(), b.generator.net.flat_state());
}

#[test]
fn mt_resume_reproduces_losses() {
    let c = clips(2, 60, 2);
    let cfg = small_mt();
    let mut stream = affmt_train::data::SequenceStream::new(&c, cfg.sequences, cfg.sequence_length, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut a = MtTrainer::new(cfg.clone(), 5).unwrap();
    for s in 0..2 {
        a.train_step(&stream.batch(s).unwrap()).unwrap();
    }
    a.save(dir.path()).unwrap();
    let mut b = MtTrainer::load(dir.path(), Some((&cfg, 5))).unwrap();
    for s in 2..12 {
        let batch = stream.batch(s).unwrap();
        let ra = a.train_step(&batch).unwrap();
        let rb = b.train_step(&batch).unwrap();
        assert!((ra.bundle.total - rb.bundle.total).abs() <= 1e-10);
    }
}

#[test]
fn fingerprint_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    GanTrainer::new(small_gan(), 1).unwrap().save(dir.path()).unwrap();
    let other = affmt_train::GanTrainConfig { gen_lr: 2e-4, ..small_gan() };
    let err = GanTrainer::load(dir.path(), Some((&other, 1))).err().unwrap();
    assert!(matches!(err, TrainError::Checkpoint(ref m) if m.contains("fingerprint")), "{err}");
    assert!(GanTrainer::load(dir.path(), Some((&small_gan(), 2))).is_err());
    assert!(GanTrainer::load(dir.path(), Some((&small_gan(), 1))).is_ok());
}

#[test]
fn corrupted_blob_fails_integrity_check() {
    let dir = tempfile::tempdir().unwrap();
    GanTrainer::new(small_gan(), 1).unwrap().save(dir.path()).unwrap();
    let blob = dir.path().join(affmt_train::checkpoint::BLOB);
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[100] ^= 0x40;
    std::fs::write(&blob, bytes).unwrap();
    let err = GanTrainer::load(dir.path(), None).err().unwrap();
    assert!(err.to_string().contains("integrity"), "{err}");
}

#[test]
fn truncated_blob_fails() {
    let dir = tempfile::tempdir().unwrap();
    MtTrainer::new(small_mt(), 1).unwrap().save(dir.path()).unwrap();
    let blob = dir.path().join(affmt_train::checkpoint::BLOB);
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() / 2]).unwrap();
    assert!(MtTrainer::load(dir.path(), None).is_err());
}

#[test]
fn wrong_kind_is_a_type_error() {
    let dir = tempfile::tempdir().unwrap();
    MtTrainer::new(small_mt(), 1).unwrap().save(dir.path()).unwrap();
    assert!(matches!(
        GanTrainer::load(dir.path(), None),
        Err(TrainError::WrongKind { expected: "gan", .. })
    ));
}

#[test]
fn manifest_lists_every_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let t = GanTrainer::new(small_gan(), 1).unwrap();
    t.save(dir.path()).unwrap();
    let m = affmt_train::checkpoint::read_manifest(dir.path()).unwrap();
    assert_eq!(m.step, 0);
    assert_eq!(m.fingerprint, t.fingerprint());
    let floats: usize = m.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    let blob = std::fs::metadata(dir.path().join(affmt_train::checkpoint::BLOB)).unwrap().len();
    assert_eq!(blob as usize, floats * 4);
}
