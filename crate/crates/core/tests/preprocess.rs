use affmt_core::dataset::{ConsolidatedFrame, Expression, VaPair};
use affmt_core::preprocess::synth::{
    au_labels, expression_label, synth_corpus, va_label, FaceParams, SynthConfig,
};
use affmt_core::preprocess::{
    crop_and_resize_rgb, encode_png, CropBox, ImageTensor, LabelledClip, Resolution, SequenceBatcher,
};
use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct four-tap bilinear sample per output pixel, half-pixel centres.
fn reference_resize(img: &RgbImage, b: CropBox, side: usize) -> Vec<f64> {
    let sample = |x: u32, y: u32, c: usize| f64::from(img.get_pixel(b.x + x, b.y + y).0[c]);
    let mut out = Vec::new();
    for oy in 0..side {
        for ox in 0..side {
            let sx = ((ox as f64 + 0.5) * b.width as f64 / side as f64 - 0.5).clamp(0.0, (b.width - 1) as f64);
            let sy = ((oy as f64 + 0.5) * b.height as f64 / side as f64 - 0.5).clamp(0.0, (b.height - 1) as f64);
            let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
            let (x1, y1) = ((x0 + 1).min(b.width - 1), (y0 + 1).min(b.height - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                let v = sample(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
                    + sample(x1, y0, c) * fx * (1.0 - fy)
                    + sample(x0, y1, c) * (1.0 - fx) * fy
                    + sample(x1, y1, c) * fx * fy;
                out.push(v / 127.5 - 1.0);
            }
        }
    }
    out
}

fn noise(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

#[test]
fn resize_matches_reference_resampler() {
    for seed in 0..20 {
        let img = noise(100, 90, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let b = CropBox {
            x: rng.random_range(0..36),
            y: rng.random_range(0..26),
            width: 64,
            height: 64,
        };
        let got = crop_and_resize_rgb(&img, b, Resolution::R32).unwrap();
        let want = reference_resize(&img, b, 32);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((f64::from(*g) - w).abs() <= 1e-6, "{g} vs {w}");
        }
        // upsampling path
        let small = CropBox { x: 3, y: 4, width: 40, height: 30 };
        let got = crop_and_resize_rgb(&img, small, Resolution::R96).unwrap();
        let want = reference_resize(&img, small, 96);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((f64::from(*g) - w).abs() <= 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn full_box_resize_is_idempotent(seed in any::<u64>(), big in any::<bool>()) {
        let r = if big { Resolution::R96 } else { Resolution::R32 };
        let s = r.side() as u32;
        let img = noise(s, s, seed);
        let once = crop_and_resize_rgb(&img, CropBox::full(&img), r).unwrap();
        let back = once.to_rgb8();
        prop_assert_eq!(&back, &img);
        let twice = crop_and_resize_rgb(&back, CropBox::full(&back), r).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn every_output_in_unit_range(seed in any::<u64>(), w in 1u32..80, h in 1u32..80) {
        let img = noise(w, h, seed);
        let t = crop_and_resize_rgb(&img, CropBox::full(&img), Resolution::R32).unwrap();
        prop_assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

fn clip(id: &str, n: u32) -> LabelledClip {
    let frames = (0..n)
        .map(|i| ImageTensor::new(1, 1, vec![(i as f32 / n as f32) - 0.5; 3]).unwrap())
        .collect();
    let labels = (0..n)
        .map(|i| ConsolidatedFrame {
            video_id: id.into(),
            frame_index: i,
            va: Some(VaPair::clamped(0.0, 0.0)),
            aus: None,
            expression: Some(Expression::Neutral),
        })
        .collect();
    LabelledClip::new(id, frames, labels).unwrap()
}

#[test]
fn default_batch_holds_eight_hundred_frames() {
    let clips: Vec<_> = (0..6).map(|i| clip(&format!("v{i}"), 300)).collect();
    let b = SequenceBatcher::new(&clips, 10, 80, 3).unwrap();
    let batches: Vec<_> = b.epoch(0).collect();
    assert!(!batches.is_empty());
    for batch in &batches {
        assert_eq!(batch.frames(), 800);
        assert_eq!(batch.va.len(), 800);
        for w in &batch.windows {
            let c = &clips[w.clip];
            let idx: Vec<u32> = (w.start..w.start + 80).map(|i| c.labels[i].frame_index).collect();
            assert!(idx.windows(2).all(|p| p[1] == p[0] + 1));
        }
    }
}

#[test]
fn seventy_nine_frames_contribute_nothing() {
    let clips = vec![clip("short", 79)];
    let b = SequenceBatcher::new(&clips, 1, 80, 0).unwrap();
    assert!(b.windows(0).is_empty());
    assert_eq!(b.epoch(0).count(), 0);
}

#[test]
fn batch_order_depends_only_on_seed_and_epoch() {
    let clips: Vec<_> = (0..4).map(|i| clip(&format!("v{i}"), 130 + 17 * i)).collect();
    let a = SequenceBatcher::new(&clips, 3, 20, 9).unwrap();
    let b = SequenceBatcher::new(&clips, 3, 20, 9).unwrap();
    for epoch in 0..2 {
        let x: Vec<_> = a.epoch(epoch).map(|b| (b.windows, b.pixels)).collect();
        let y: Vec<_> = b.epoch(epoch).map(|b| (b.windows, b.pixels)).collect();
        assert_eq!(x, y);
    }
}

#[test]
fn synthetic_labels_follow_parameter_table() {
    let n = FaceParams::NEUTRAL;
    // (params, active AUs, valence sign, expression)
    let table: Vec<(FaceParams, Vec<u8>, f64, Expression)> = vec![
        (n, vec![], 0.0, Expression::Neutral),
        (FaceParams { smile: 1.0, ..n }, vec![12], 1.0, Expression::Happiness),
        (FaceParams { brow_raise: 1.0, mouth_open: 1.0, ..n }, vec![1, 2, 25], 0.0, Expression::Surprise),
        (FaceParams { brow_lower: 1.0, smile: -0.4, stretch: 0.4, ..n }, vec![4, 15], -1.0, Expression::Anger),
        (FaceParams { brow_raise: 0.5, smile: -0.8, droop: 0.7, ..n }, vec![1, 15], -1.0, Expression::Sadness),
        (FaceParams { brow_raise: 0.8, smile: -0.2, mouth_open: 0.5, stretch: 1.0, ..n }, vec![1, 2, 20, 25], 0.0, Expression::Fear),
    ];
    for (p, aus, sign, e) in table {
        let want = affmt_core::AuVector::with_active(&aus).unwrap();
        assert_eq!(au_labels(&p), want, "{p:?}");
        assert_eq!(expression_label(&p), e, "{p:?}");
        let v = va_label(&p).valence;
        if sign == 0.0 {
            assert!(v.abs() < 0.5);
        } else {
            assert!(v * sign > 0.2, "{p:?} valence {v}");
        }
    }
    assert!(va_label(&FaceParams { smile: 1.0, ..n }).valence > 0.5);
    assert!(va_label(&FaceParams { mouth_open: 1.0, ..n }).arousal > va_label(&n).arousal);
}

#[test]
fn same_seed_gives_identical_png_bytes() {
    let cfg = SynthConfig {
        subjects: 2,
        frames_per_video: 4,
        resolution: Resolution::R96,
        seed: 17,
        ..SynthConfig::default()
    };
    let a = synth_corpus(&cfg);
    let b = synth_corpus(&cfg);
    for (x, y) in a.videos.iter().zip(&b.videos) {
        for (f, g) in x.frames.iter().zip(&y.frames) {
            assert_eq!(encode_png(f), encode_png(g));
            assert_eq!(f.dimensions(), (96, 96));
        }
    }
    let other = synth_corpus(&SynthConfig { seed: 18, ..cfg });
    assert_ne!(a.videos[0].frames[0], other.videos[0].frames[0]);
}
