use affmt_core::losses::{
    anneal_weight, au_bce_loss, discriminator_loss, fake_bce_loss, generator_loss, huber, huber_grad,
    multitask_loss, AnnealSchedule, DiscHeads, ExprLossMode, HeadWeights, MultitaskWeights, RealTargets,
    SmoothedTarget, VaLossMode, HUBER_DELTA,
};
use proptest::prelude::*;

fn fixture(n: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<[f64; 7]>, Vec<[f64; 2]>, Vec<Option<usize>>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let va = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let logits = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect();
    let va_t = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let expr_t = (0..n)
        .map(|_| rng.random_bool(0.8).then(|| rng.random_range(0..7)))
        .collect();
    (va, logits, va_t, expr_t)
}

fn all_modes() -> Vec<(VaLossMode, ExprLossMode)> {
    [VaLossMode::Ccc, VaLossMode::Mse]
        .into_iter()
        .flat_map(|v| ExprLossMode::ALL.into_iter().map(move |e| (v, e)))
        .collect()
}

#[test]
fn multitask_total_is_linear_in_weights() {
    let (va, z, va_t, expr_t) = fixture(40, 1);
    for (vm, em) in all_modes() {
        let total = |alpha, beta| {
            multitask_loss(&va, &z, &va_t, &expr_t, MultitaskWeights { alpha, beta }, vm, em)
                .unwrap()
        };
        let va_only = total(1.0, 0.0);
        let expr_only = total(0.0, 1.0);
        assert!(va_only.grad_logits.iter().flatten().all(|&g| g == 0.0));
        assert!(expr_only.grad_va.iter().flatten().all(|&g| g == 0.0));
        for (a, b) in [(0.5, 0.5), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75), (1.0, 1.0)] {
            let t = total(a, b).bundle.total;
            let lin = a * va_only.bundle.total + b * expr_only.bundle.total;
            assert!((t - lin).abs() <= 1e-12, "{vm:?} {em:?} ({a},{b})");
        }
        assert_eq!(expr_only.bundle.total, expr_only.bundle.component("expr").unwrap());
    }
}

#[test]
fn removing_unlabelled_frames_keeps_expression_term() {
    let (va, z, va_t, expr_t) = fixture(30, 2);
    let keep: Vec<usize> = (0..30).filter(|&i| expr_t[i].is_some()).collect();
    for em in ExprLossMode::ALL {
        let w = MultitaskWeights { alpha: 0.0, beta: 1.0 };
        let full = multitask_loss(&va, &z, &va_t, &expr_t, w, VaLossMode::Mse, em).unwrap();
        let pick = |v: &[[f64; 7]]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let sub = multitask_loss(
            &keep.iter().map(|&i| va[i]).collect::<Vec<_>>(),
            &pick(&z),
            &keep.iter().map(|&i| va_t[i]).collect::<Vec<_>>(),
            &keep.iter().map(|&i| expr_t[i]).collect::<Vec<_>>(),
            w,
            VaLossMode::Mse,
            em,
        )
        .unwrap();
        assert!((full.bundle.total - sub.bundle.total).abs() < 1e-15);
    }
}

#[test]
fn half_half_example() {
    // L_VA = 0.4 via MSE, L_expr = 0.6 via MSE on raw scores
    let va = [[0.0, 0.0], [0.0, 0.0]];
    let va_t = [[(0.4f64).sqrt(), (0.4f64).sqrt()], [-(0.4f64).sqrt(), -(0.4f64).sqrt()]];
    let v = (0.6f64 * 7.0).sqrt();
    let z = [[1.0 + v, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0 + v, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
    let t = [Some(0), Some(0)];
    let w = MultitaskWeights { alpha: 0.5, beta: 0.5 };
    let l = multitask_loss(&va, &z, &va_t, &t, w, VaLossMode::Mse, ExprLossMode::MsePreSoftmax).unwrap();
    assert!((l.bundle.component("va").unwrap() - 0.4).abs() < 1e-12);
    assert!((l.bundle.component("expr").unwrap() - 0.6).abs() < 1e-12);
    assert!((l.bundle.total - 0.5).abs() < 1e-12);
}

#[test]
fn perfect_discriminator_residual_in_mse_mode() {
    let n = 6;
    let s = SmoothedTarget::default();
    let targets = RealTargets {
        va: (0..n).map(|i| Some([0.1 * i as f64 - 0.2, 0.3])).collect(),
        aus: (0..n).map(|i| Some(std::array::from_fn(|k| f64::from(u8::from((i + k) % 3 == 0))))).collect(),
    };
    let eps = 1e-7;
    let real = DiscHeads {
        va: targets.va.iter().map(|v| v.unwrap()).collect(),
        aus: targets.aus.iter().map(|a| a.unwrap().map(|b| if b == 1.0 { 1.0 - eps } else { eps })).collect(),
        fake: vec![eps; n],
    };
    let fake = DiscHeads {
        va: vec![s.va; n],
        aus: vec![s.aus; n],
        fake: vec![s.fake; n],
    };
    let l = discriminator_loss(&real, &targets, &fake, &s, VaLossMode::Mse, HeadWeights::JOINT).unwrap();
    let bce = |p: f64, y: f64| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    // remaining cost: entropy of the smoothed AU and fake targets on the fake batch
    let floor = bce(0.01, 0.01) + bce(0.9, 0.9);
    assert!((l.bundle.component("fake_images").unwrap() - floor).abs() < 1e-9);
    assert!(l.bundle.component("real_images").unwrap() < 1e-5);
    assert_eq!(l.targets.fake_va, vec![[0.01; 2]; n]);
    assert_eq!(l.targets.fake_aus, vec![[0.01; 8]; n]);
    assert_eq!(l.targets.fake_fake, vec![0.9; n]);
    assert_eq!(l.targets.real_fake, vec![0.0; n]);
    let sum = l.bundle.component("real_images").unwrap() + l.bundle.component("fake_images").unwrap();
    assert!((l.bundle.total - sum).abs() <= 1e-12);
}

#[test]
fn zero_au_weight_drops_au_term() {
    let n = 4;
    let targets = RealTargets {
        va: (0..n).map(|i| Some([0.2 * i as f64, -0.1 * i as f64])).collect(),
        aus: vec![Some([1.0; 8]); n],
    };
    let heads = |v: f64| DiscHeads {
        va: (0..n).map(|i| [v * i as f64, 0.1]).collect(),
        aus: vec![[0.3; 8]; n],
        fake: vec![0.4; n],
    };
    let s = SmoothedTarget::default();
    let l = discriminator_loss(&heads(0.1), &targets, &heads(0.2), &s, VaLossMode::Mse, HeadWeights::VA_ONLY).unwrap();
    let va = l.bundle.component("va").unwrap();
    let fake = l.bundle.component("fake").unwrap();
    assert!((l.bundle.total - (va + fake)).abs() <= 1e-12);
    assert!(l.real_grad.aus.iter().flatten().all(|&g| g == 0.0));
}

#[test]
fn bce_analytic_values() {
    let half = au_bce_loss(&[[0.5; 8], [0.5; 8]], &[[1.0; 8], [0.0; 8]]).unwrap();
    assert!((half.value - std::f64::consts::LN_2).abs() < 1e-15);
    let e = 1e-7;
    let sharp = au_bce_loss(&[[e; 8], [1.0 - e; 8]], &[[0.0; 8], [1.0; 8]]).unwrap();
    assert!(sharp.value < 1e-6);
    let f = fake_bce_loss(&[0.5, 0.5], &[0.0, 0.9]).unwrap();
    assert!((f.value - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn generator_examples() {
    let same = [0.2, -0.4, 0.9];
    let g = generator_loss(&[0.5, 0.5], &same, &same, 1.0).unwrap();
    assert!((g.bundle.total - 0.5f64.ln()).abs() < 1e-15);
    let g = generator_loss(&[0.3], &[-1.0, 1.0], &[1.0, -1.0], 0.0).unwrap();
    assert!((g.bundle.total - 0.3f64.ln()).abs() < 1e-15);
    let g = generator_loss(&[0.3], &[-1.0, 1.0], &[1.0, -1.0], 1.0).unwrap();
    assert!((g.bundle.component("recon").unwrap() - 1.5).abs() < 1e-15);
}

#[test]
fn anneal_examples() {
    let s = AnnealSchedule::default();
    assert_eq!(anneal_weight(0, s), 1.0);
    assert_eq!(anneal_weight(5000, s), 0.5);
    assert_eq!(anneal_weight(20_000, s), 0.0);
    let floor = AnnealSchedule::Linear { horizon: 100, floor: 0.2 };
    assert_eq!(anneal_weight(100, floor), 0.2);
}

proptest! {
    #[test]
    fn anneal_non_increasing(a in 0u64..30_000, b in 0u64..30_000, rate in 1e-5f64..1e-2) {
        let (lo, hi) = (a.min(b), a.max(b));
        for s in [AnnealSchedule::default(), AnnealSchedule::Exponential { rate, floor: 0.1 }, AnnealSchedule::Constant] {
            prop_assert!(anneal_weight(hi, s) <= anneal_weight(lo, s));
        }
    }

    #[test]
    fn huber_continuous_at_delta(h in 1e-9f64..1e-6, sign in prop::bool::ANY) {
        let s = if sign { 1.0 } else { -1.0 };
        let d = HUBER_DELTA * s;
        prop_assert!((huber(d - s * h, HUBER_DELTA) - huber(d + s * h, HUBER_DELTA)).abs() < 3.0 * h);
        prop_assert!((huber_grad(d - s * h, HUBER_DELTA) - huber_grad(d + s * h, HUBER_DELTA)).abs() < 3.0 * h);
        prop_assert_eq!(huber(d, HUBER_DELTA), 0.5);
    }

    #[test]
    fn bce_non_negative(p in prop::collection::vec(0.0f64..=1.0, 8), y in prop::collection::vec(0.0f64..=1.0, 8)) {
        let p: [f64; 8] = p.try_into().unwrap();
        let y: [f64; 8] = y.try_into().unwrap();
        prop_assert!(au_bce_loss(&[p], &[y]).unwrap().value >= 0.0);
    }
}
