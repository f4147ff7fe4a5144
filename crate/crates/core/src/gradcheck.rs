//! Central finite-difference checks for every loss in [`crate::losses`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{NUM_AUS, NUM_EXPRESSIONS};
use crate::losses::{
    au_bce_loss, ccc_va_loss, ccc_with_grad, discriminator_loss, fake_bce_loss, generator_loss,
    mse_va_loss, multitask_loss, DiscHeads, ExprLossMode, HeadWeights, MultitaskWeights, RealTargets,
    SmoothedTarget, VaLossMode,
};

pub const FD_STEP: f64 = 1e-5;

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|)` over whole gradient vectors; zero when both are zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub fixtures: usize,
    pub worst: f64,
}

impl CheckResult {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst < tol
    }
}

struct Tally {
    name: String,
    fixtures: usize,
    worst: f64,
}

impl Tally {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            fixtures: 0,
            worst: 0.0,
        }
    }

    fn check(&mut self, analytic: &[f64], f: impl Fn(&[f64]) -> f64, x: &[f64]) {
        let numeric = central_difference(f, x, FD_STEP);
        let e = relative_error(analytic, &numeric);
        self.fixtures += 1;
        if !(e <= self.worst) {
            self.worst = e;
        }
    }

    fn done(self) -> CheckResult {
        CheckResult {
            name: self.name,
            fixtures: self.fixtures,
            worst: self.worst,
        }
    }
}

fn pairs(x: &[f64]) -> Vec<[f64; 2]> {
    x.chunks(2).map(|c| [c[0], c[1]]).collect()
}

fn rows<const N: usize>(x: &[f64]) -> Vec<[f64; N]> {
    x.chunks(N).map(|c| std::array::from_fn(|i| c[i])).collect()
}

fn flat<const N: usize>(x: &[[f64; N]]) -> Vec<f64> {
    x.iter().flatten().copied().collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Probabilities kept away from the clipping band so the loss is smooth at
/// every probe.
fn probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    uniform(rng, n, 0.02, 0.98)
}

/// Residual-producing pairs whose difference stays clear of the Huber kink.
fn huber_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut fake = Vec::with_capacity(n);
    let mut real = Vec::with_capacity(n);
    while fake.len() < n {
        let f: f64 = rng.random_range(-1.0..1.0);
        let r: f64 = rng.random_range(-1.0..1.0);
        if ((r - f).abs() - 1.0).abs() > 1e-3 {
            fake.push(f);
            real.push(r);
        }
    }
    (fake, real)
}

fn maybe<T>(rng: &mut ChaCha8Rng, p: f64, v: T) -> Option<T> {
    rng.random_bool(p).then_some(v)
}

/// Runs `fixtures` random cases per loss family and reports the worst relative
/// error for each.
pub fn loss_suite(fixtures: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut t = Tally::new("ccc");
    for _ in 0..fixtures {
        let n = rng.random_range(2..40);
        let p = uniform(&mut rng, n, -1.0, 1.0);
        let y = uniform(&mut rng, n, -1.0, 1.0);
        let (_, g) = ccc_with_grad(&p, &y).unwrap();
        t.check(&g, |x| ccc_with_grad(x, &y).unwrap().0, &p);
    }
    out.push(t.done());

    for (name, mode) in [("va_ccc", VaLossMode::Ccc), ("va_mse", VaLossMode::Mse)] {
        let mut t = Tally::new(name);
        for _ in 0..fixtures {
            let n = rng.random_range(2..30);
            let p = uniform(&mut rng, 2 * n, -1.0, 1.0);
            let y = pairs(&uniform(&mut rng, 2 * n, -1.0, 1.0));
            let f = |x: &[f64]| match mode {
                VaLossMode::Ccc => ccc_va_loss(&pairs(x), &y).unwrap().value,
                VaLossMode::Mse => mse_va_loss(&pairs(x), &y).unwrap().value,
            };
            let g = match mode {
                VaLossMode::Ccc => ccc_va_loss(&pairs(&p), &y).unwrap().grad,
                VaLossMode::Mse => mse_va_loss(&pairs(&p), &y).unwrap().grad,
            };
            t.check(&flat(&g), f, &p);
        }
        out.push(t.done());
    }

    for (name, soft) in [("au_bce_binary", false), ("au_bce_soft", true)] {
        let mut t = Tally::new(name);
        for _ in 0..fixtures {
            let n = rng.random_range(1..20);
            let p = probs(&mut rng, NUM_AUS * n);
            let y: Vec<f64> = if soft {
                uniform(&mut rng, NUM_AUS * n, 0.0, 1.0)
            } else {
                (0..NUM_AUS * n).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect()
            };
            let y = rows::<NUM_AUS>(&y);
            let g = au_bce_loss(&rows(&p), &y).unwrap().grad;
            t.check(&flat(&g), |x| au_bce_loss(&rows(x), &y).unwrap().value, &p);
        }
        out.push(t.done());
    }

    let mut t = Tally::new("fake_bce");
    for _ in 0..fixtures {
        let n = rng.random_range(1..30);
        let p = probs(&mut rng, n);
        let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 0.0 } else { 0.9 }).collect();
        let g = fake_bce_loss(&p, &y).unwrap().grad;
        t.check(&g, |x| fake_bce_loss(x, &y).unwrap().value, &p);
    }
    out.push(t.done());

    for (mode, mode_name) in [(VaLossMode::Ccc, "ccc"), (VaLossMode::Mse, "mse")] {
        for (weights, w_name) in [
            (HeadWeights::JOINT, "joint"),
            (HeadWeights::VA_ONLY, "va"),
            (HeadWeights::AU_ONLY, "au"),
        ] {
            let mut t = Tally::new(format!("discriminator_{mode_name}_{w_name}"));
            for _ in 0..fixtures {
                let n = rng.random_range(2..12);
                let real = disc_flat(&mut rng, n);
                let fake = disc_flat(&mut rng, n);
                let mut targets = RealTargets {
                    va: Vec::with_capacity(n),
                    aus: Vec::with_capacity(n),
                };
                for _ in 0..n {
                    let va = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                    let aus = std::array::from_fn(|_| f64::from(u8::from(rng.random_bool(0.3))));
                    targets.va.push(maybe(&mut rng, 0.9, va));
                    targets.aus.push(maybe(&mut rng, 0.9, aus));
                }
                // at least two VA-labelled rows keep the CCC term defined
                for i in 0..2 {
                    if targets.va[i].is_none() {
                        targets.va[i] = Some([0.3 * i as f64 - 0.1, 0.2]);
                    }
                }
                let smoothed = SmoothedTarget::default();
                let eval = |r: &[f64], f: &[f64]| {
                    discriminator_loss(&disc_heads(r), &targets, &disc_heads(f), &smoothed, mode, weights)
                        .unwrap()
                };
                let l = eval(&real, &fake);
                t.check(&disc_grad_flat(&l.real_grad), |x| eval(x, &fake).bundle.total, &real);
                t.check(&disc_grad_flat(&l.fake_grad), |x| eval(&real, x).bundle.total, &fake);
            }
            out.push(t.done());
        }
    }

    let mut t = Tally::new("generator_adversarial");
    let mut h = Tally::new("generator_huber");
    for _ in 0..fixtures {
        let n = rng.random_range(1..8);
        let px = rng.random_range(1..40);
        let x = probs(&mut rng, n);
        let (fake, real) = huber_pair(&mut rng, n * px);
        let w = rng.random_range(0.0..1.0);
        let l = generator_loss(&x, &fake, &real, w).unwrap();
        t.check(&l.grad_fake_prob, |p| generator_loss(p, &fake, &real, w).unwrap().bundle.total, &x);
        h.check(&l.grad_fake_images, |f| generator_loss(&x, f, &real, w).unwrap().bundle.total, &fake);
    }
    out.push(t.done());
    out.push(h.done());

    for va_mode in [VaLossMode::Ccc, VaLossMode::Mse] {
        for expr_mode in ExprLossMode::ALL {
            let mut t = Tally::new(format!("multitask_{}_{}", va_mode.name(), expr_mode.name()));
            for _ in 0..fixtures {
                let n = rng.random_range(2..20);
                let va = uniform(&mut rng, 2 * n, -1.0, 1.0);
                let logits = uniform(&mut rng, NUM_EXPRESSIONS * n, -2.0, 2.0);
                let va_t = pairs(&uniform(&mut rng, 2 * n, -1.0, 1.0));
                let expr_t: Vec<Option<usize>> = (0..n)
                    .map(|_| {
                        let c = rng.random_range(0..NUM_EXPRESSIONS);
                        maybe(&mut rng, 0.8, c)
                    })
                    .collect();
                let w = MultitaskWeights {
                    alpha: rng.random_range(0.0..1.0),
                    beta: rng.random_range(0.0..1.0),
                };
                let eval = |v: &[f64], z: &[f64]| {
                    multitask_loss(&pairs(v), &rows(z), &va_t, &expr_t, w, va_mode, expr_mode).unwrap()
                };
                let l = eval(&va, &logits);
                t.check(&flat(&l.grad_va), |x| eval(x, &logits).bundle.total, &va);
                t.check(&flat(&l.grad_logits), |x| eval(&va, x).bundle.total, &logits);
            }
            out.push(t.done());
        }
    }
    out
}

const DISC_WIDTH: usize = 2 + NUM_AUS + 1;

fn disc_flat(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n * DISC_WIDTH);
    for _ in 0..n {
        v.extend(uniform(rng, 2, -1.0, 1.0));
        v.extend(probs(rng, NUM_AUS + 1));
    }
    v
}

fn disc_heads(x: &[f64]) -> DiscHeads {
    let mut h = DiscHeads::zeros(0);
    for row in x.chunks(DISC_WIDTH) {
        h.va.push([row[0], row[1]]);
        h.aus.push(std::array::from_fn(|i| row[2 + i]));
        h.fake.push(row[DISC_WIDTH - 1]);
    }
    h
}

fn disc_grad_flat(g: &DiscHeads) -> Vec<f64> {
    let mut v = Vec::with_capacity(g.len() * DISC_WIDTH);
    for i in 0..g.len() {
        v.extend(g.va[i]);
        v.extend(g.aus[i]);
        v.push(g.fake[i]);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_cubic() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, 5.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_zero_vectors() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0], &[0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_suite_passes() {
        for r in loss_suite(5, 11) {
            assert!(r.passed(1e-4), "{r:?}");
        }
    }
}
