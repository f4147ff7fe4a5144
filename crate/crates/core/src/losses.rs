//! Training objectives with analytic gradients.
//!
//! Every loss returns its value together with the gradient with respect to
//! the model outputs it consumes, computed in `f64`. Trainers feed these
//! gradients straight into back-propagation; the test-suite checks each of
//! them against central finite differences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{NUM_AUS, NUM_EXPRESSIONS};

/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;
pub const HUBER_DELTA: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
}

type Result<T> = std::result::Result<T, LossError>;

fn same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(LossError::Shape(format!("{what}: {a} predictions vs {b} targets")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VaLossMode {
    Ccc,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExprLossMode {
    #[serde(rename = "xent")]
    CrossEntropy,
    /// Squared error on the pre-softmax scores.
    #[serde(rename = "mse_pre")]
    MsePreSoftmax,
    /// Squared error on the softmax probabilities.
    #[serde(rename = "mse_post")]
    MsePostSoftmax,
}

impl VaLossMode {
    pub fn name(self) -> &'static str {
        match self {
            VaLossMode::Ccc => "ccc",
            VaLossMode::Mse => "mse",
        }
    }
}

impl ExprLossMode {
    pub const ALL: [ExprLossMode; 3] = [
        ExprLossMode::CrossEntropy,
        ExprLossMode::MsePreSoftmax,
        ExprLossMode::MsePostSoftmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExprLossMode::CrossEntropy => "xent",
            ExprLossMode::MsePreSoftmax => "mse_pre",
            ExprLossMode::MsePostSoftmax => "mse_post",
        }
    }
}

/// A scalar loss with its named parts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub total: f64,
    pub components: BTreeMap<String, f64>,
}

impl LossBundle {
    fn with(total: f64, parts: &[(&str, f64)]) -> Self {
        Self {
            total,
            components: parts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.get(name).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.components.values().all(|v| v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Concordance correlation coefficient

struct Centered {
    mean: f64,
    dev: Vec<f64>,
    var: f64,
}

/// Population mean/deviation/variance. Values are shifted by the first element
/// before summation so that a constant sequence has exactly zero deviations.
fn center(x: &[f64]) -> Centered {
    let n = x.len() as f64;
    let x0 = x[0];
    let shifted_mean = x.iter().map(|v| v - x0).sum::<f64>() / n;
    let dev: Vec<f64> = x.iter().map(|v| (v - x0) - shifted_mean).collect();
    let var = dev.iter().map(|d| d * d).sum::<f64>() / n;
    Centered {
        mean: x0 + shifted_mean,
        dev,
        var,
    }
}

struct CccTerms {
    p: Centered,
    t: Centered,
    num: f64,
    den: f64,
}

fn ccc_terms(pred: &[f64], target: &[f64]) -> Result<CccTerms> {
    same_len("ccc", pred.len(), target.len())?;
    if pred.len() < 2 {
        return Err(LossError::Shape(format!(
            "ccc needs at least 2 samples, got {}",
            pred.len()
        )));
    }
    let p = center(pred);
    let t = center(target);
    let n = pred.len() as f64;
    let cov = p.dev.iter().zip(&t.dev).map(|(a, b)| a * b).sum::<f64>() / n;
    let diff = p.mean - t.mean;
    Ok(CccTerms {
        num: 2.0 * cov,
        den: p.var + t.var + diff * diff,
        p,
        t,
    })
}

/// Concordance correlation coefficient with population statistics:
/// `2 cov / (var_p + var_t + (mean_p - mean_t)^2)`.
///
/// When both sequences are constant with equal means the ratio is `0/0`;
/// that case returns `0`.
pub fn ccc(pred: &[f64], target: &[f64]) -> Result<f64> {
    let c = ccc_terms(pred, target)?;
    Ok(if c.den == 0.0 { 0.0 } else { c.num / c.den })
}

/// CCC and its gradient with respect to `pred`.
pub fn ccc_with_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let c = ccc_terms(pred, target)?;
    if c.den == 0.0 {
        return Ok((0.0, vec![0.0; pred.len()]));
    }
    let n = pred.len() as f64;
    let mean_diff = c.p.mean - c.t.mean;
    let den2 = c.den * c.den;
    let grad = c
        .p
        .dev
        .iter()
        .zip(&c.t.dev)
        .map(|(dp, dt)| 2.0 / n * (dt * c.den - c.num * (dp + mean_diff)) / den2)
        .collect();
    Ok((c.num / c.den, grad))
}

// ---------------------------------------------------------------------------
// Valence-arousal losses. Rows are `[valence, arousal]`.

#[derive(Debug, Clone, PartialEq)]
pub struct VaLoss {
    pub value: f64,
    pub grad: Vec<[f64; 2]>,
}

fn column(rows: &[[f64; 2]], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}

/// `1 - (ccc_v + ccc_a) / 2`.
pub fn ccc_va_loss(pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<VaLoss> {
    same_len("ccc_va_loss", pred.len(), target.len())?;
    let (rv, gv) = ccc_with_grad(&column(pred, 0), &column(target, 0))?;
    let (ra, ga) = ccc_with_grad(&column(pred, 1), &column(target, 1))?;
    Ok(VaLoss {
        value: 1.0 - (rv + ra) / 2.0,
        grad: gv.iter().zip(&ga).map(|(v, a)| [-v / 2.0, -a / 2.0]).collect(),
    })
}

/// Average of the valence MSE and the arousal MSE.
pub fn mse_va_loss(pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<VaLoss> {
    same_len("mse_va_loss", pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(VaLoss {
            value: 0.0,
            grad: Vec::new(),
        });
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let dv = p[0] - t[0];
            let da = p[1] - t[1];
            sum += dv * dv + da * da;
            [dv / n, da / n]
        })
        .collect();
    Ok(VaLoss {
        value: sum / (2.0 * n),
        grad,
    })
}

pub fn va_loss(mode: VaLossMode, pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<VaLoss> {
    match mode {
        VaLossMode::Ccc => ccc_va_loss(pred, target),
        VaLossMode::Mse => mse_va_loss(pred, target),
    }
}

// ---------------------------------------------------------------------------
// Binary cross-entropy heads

fn bce_term(p: f64, t: f64) -> (f64, f64) {
    let clipped = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let value = -(t * clipped.ln() + (1.0 - t) * (1.0 - clipped).ln());
    let grad = if p < PROB_EPS || p > 1.0 - PROB_EPS {
        0.0
    } else {
        (clipped - t) / (clipped * (1.0 - clipped))
    };
    (value, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuLoss {
    pub value: f64,
    pub grad: Vec<[f64; NUM_AUS]>,
}

/// Binary cross-entropy averaged over the batch and the eight AUs. Targets
/// may be soft (e.g. the smoothed 0.01 used for generated images).
pub fn au_bce_loss(pred: &[[f64; NUM_AUS]], target: &[[f64; NUM_AUS]]) -> Result<AuLoss> {
    same_len("au_bce_loss", pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(AuLoss {
            value: 0.0,
            grad: Vec::new(),
        });
    }
    let scale = 1.0 / (pred.len() * NUM_AUS) as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let mut g = [0.0; NUM_AUS];
            for k in 0..NUM_AUS {
                let (v, d) = bce_term(p[k], t[k]);
                sum += v;
                g[k] = d * scale;
            }
            g
        })
        .collect();
    Ok(AuLoss {
        value: sum * scale,
        grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarHeadLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Binary cross-entropy of the fake-class probability, batch mean.
pub fn fake_bce_loss(pred: &[f64], target: &[f64]) -> Result<ScalarHeadLoss> {
    same_len("fake_bce_loss", pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(ScalarHeadLoss {
            value: 0.0,
            grad: Vec::new(),
        });
    }
    let scale = 1.0 / pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let (v, d) = bce_term(p, t);
            sum += v;
            d * scale
        })
        .collect();
    Ok(ScalarHeadLoss {
        value: sum * scale,
        grad,
    })
}

// ---------------------------------------------------------------------------
// Semi-supervised GAN discriminator

/// Targets used for generated images, and the fake-class target for real ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedTarget {
    pub va: [f64; 2],
    pub aus: [f64; NUM_AUS],
    pub fake: f64,
    pub real_fake: f64,
}

impl Default for SmoothedTarget {
    fn default() -> Self {
        Self {
            va: [0.01; 2],
            aus: [0.01; NUM_AUS],
            fake: 0.9,
            real_fake: 0.0,
        }
    }
}

/// Discriminator head outputs for a batch: linear VA, AU probabilities and
/// fake-class probability.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscHeads {
    pub va: Vec<[f64; 2]>,
    pub aus: Vec<[f64; NUM_AUS]>,
    pub fake: Vec<f64>,
}

impl DiscHeads {
    pub fn len(&self) -> usize {
        self.fake.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fake.is_empty()
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            va: vec![[0.0; 2]; n],
            aus: vec![[0.0; NUM_AUS]; n],
            fake: vec![0.0; n],
        }
    }

    fn check(&self, what: &str) -> Result<()> {
        same_len(what, self.va.len(), self.fake.len())?;
        same_len(what, self.aus.len(), self.fake.len())
    }
}

/// Per-sample targets for a batch of real images. Samples without a label
/// for a family are excluded from that family's loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RealTargets {
    pub va: Vec<Option<[f64; 2]>>,
    pub aus: Vec<Option<[f64; NUM_AUS]>>,
}

/// Which supervised heads contribute; the fake head always does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadWeights {
    pub va: f64,
    pub au: f64,
}

impl HeadWeights {
    pub const JOINT: HeadWeights = HeadWeights { va: 1.0, au: 1.0 };
    pub const VA_ONLY: HeadWeights = HeadWeights { va: 1.0, au: 0.0 };
    pub const AU_ONLY: HeadWeights = HeadWeights { va: 0.0, au: 1.0 };
}

/// Exact targets the discriminator loss was evaluated against, for inspection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscTargetsUsed {
    pub real_fake: Vec<f64>,
    pub fake_va: Vec<[f64; 2]>,
    pub fake_aus: Vec<[f64; NUM_AUS]>,
    pub fake_fake: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscLoss {
    pub bundle: LossBundle,
    pub real_grad: DiscHeads,
    pub fake_grad: DiscHeads,
    pub targets: DiscTargetsUsed,
}

struct HeadTerms {
    va: f64,
    au: f64,
    fake: f64,
    total: f64,
    grad: DiscHeads,
}

fn masked_indices<T>(v: &[Option<T>]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter_map(|(i, x)| x.is_some().then_some(i))
        .collect()
}

fn head_terms(
    out: &DiscHeads,
    va_targets: &[Option<[f64; 2]>],
    au_targets: &[Option<[f64; NUM_AUS]>],
    fake_targets: &[f64],
    va_mode: VaLossMode,
    weights: HeadWeights,
) -> Result<HeadTerms> {
    let n = out.len();
    let mut grad = DiscHeads::zeros(n);

    let mut va = 0.0;
    if weights.va != 0.0 {
        let idx = masked_indices(va_targets);
        if !idx.is_empty() {
            let p: Vec<[f64; 2]> = idx.iter().map(|&i| out.va[i]).collect();
            let t: Vec<[f64; 2]> = idx.iter().map(|&i| va_targets[i].unwrap()).collect();
            let l = va_loss(va_mode, &p, &t)?;
            va = l.value;
            for (&i, g) in idx.iter().zip(&l.grad) {
                grad.va[i] = [g[0] * weights.va, g[1] * weights.va];
            }
        }
    }

    let mut au = 0.0;
    if weights.au != 0.0 {
        let idx = masked_indices(au_targets);
        if !idx.is_empty() {
            let p: Vec<[f64; NUM_AUS]> = idx.iter().map(|&i| out.aus[i]).collect();
            let t: Vec<[f64; NUM_AUS]> = idx.iter().map(|&i| au_targets[i].unwrap()).collect();
            let l = au_bce_loss(&p, &t)?;
            au = l.value;
            for (&i, g) in idx.iter().zip(&l.grad) {
                grad.aus[i] = g.map(|x| x * weights.au);
            }
        }
    }

    let f = fake_bce_loss(&out.fake, fake_targets)?;
    grad.fake = f.grad;

    Ok(HeadTerms {
        va,
        au,
        fake: f.value,
        total: weights.va * va + weights.au * au + f.value,
        grad,
    })
}

/// Discriminator objective `R + F`: each of the real-image and fake-image
/// losses is `VA + AU + fake-class`. Real images use their true VA/AU labels
/// with fake-class target `smoothed.real_fake`; generated images use the
/// smoothed constants for every head.
pub fn discriminator_loss(
    real_out: &DiscHeads,
    real_targets: &RealTargets,
    fake_out: &DiscHeads,
    smoothed: &SmoothedTarget,
    va_mode: VaLossMode,
    weights: HeadWeights,
) -> Result<DiscLoss> {
    real_out.check("discriminator real outputs")?;
    fake_out.check("discriminator fake outputs")?;
    same_len("real va targets", real_out.len(), real_targets.va.len())?;
    same_len("real au targets", real_out.len(), real_targets.aus.len())?;

    let targets = DiscTargetsUsed {
        real_fake: vec![smoothed.real_fake; real_out.len()],
        fake_va: vec![smoothed.va; fake_out.len()],
        fake_aus: vec![smoothed.aus; fake_out.len()],
        fake_fake: vec![smoothed.fake; fake_out.len()],
    };

    let real = head_terms(
        real_out,
        &real_targets.va,
        &real_targets.aus,
        &targets.real_fake,
        va_mode,
        weights,
    )?;
    let fake_va: Vec<_> = targets.fake_va.iter().copied().map(Some).collect();
    let fake_aus: Vec<_> = targets.fake_aus.iter().copied().map(Some).collect();
    let fake = head_terms(
        fake_out,
        &fake_va,
        &fake_aus,
        &targets.fake_fake,
        va_mode,
        weights,
    )?;

    let bundle = LossBundle::with(
        real.total + fake.total,
        &[
            ("va", real.va + fake.va),
            ("au", real.au + fake.au),
            ("fake", real.fake + fake.fake),
            ("real_images", real.total),
            ("fake_images", fake.total),
        ],
    );
    Ok(DiscLoss {
        bundle,
        real_grad: real.grad,
        fake_grad: fake.grad,
        targets,
    })
}

// ---------------------------------------------------------------------------
// Generator

pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub fn huber_grad(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenLoss {
    pub bundle: LossBundle,
    /// Gradient w.r.t. the discriminator's fake-class probability per sample.
    pub grad_fake_prob: Vec<f64>,
    /// Gradient w.r.t. each generated pixel.
    pub grad_fake_images: Vec<f64>,
}

/// `mean(log x) + w_r * mean(huber(real - fake))`, where `x` is the
/// discriminator's fake-class probability for each generated image and the
/// Huber term pairs generated and real images index by index.
pub fn generator_loss(
    fake_prob: &[f64],
    fake_images: &[f64],
    real_images: &[f64],
    recon_weight: f64,
) -> Result<GenLoss> {
    same_len("generator images", fake_images.len(), real_images.len())?;
    if fake_prob.is_empty() {
        return Err(LossError::Shape("generator loss on empty batch".into()));
    }
    let n = fake_prob.len() as f64;
    let mut adv = 0.0;
    let grad_fake_prob = fake_prob
        .iter()
        .map(|&x| {
            let c = x.clamp(PROB_EPS, 1.0 - PROB_EPS);
            adv += c.ln();
            if x < PROB_EPS || x > 1.0 - PROB_EPS {
                0.0
            } else {
                1.0 / (n * c)
            }
        })
        .collect();
    adv /= n;

    let (recon, grad_fake_images) = if fake_images.is_empty() {
        (0.0, Vec::new())
    } else {
        let m = fake_images.len() as f64;
        let mut sum = 0.0;
        let g = fake_images
            .iter()
            .zip(real_images)
            .map(|(&f, &r)| {
                let res = r - f;
                sum += huber(res, HUBER_DELTA);
                -recon_weight * huber_grad(res, HUBER_DELTA) / m
            })
            .collect();
        (sum / m, g)
    };

    Ok(GenLoss {
        bundle: LossBundle::with(
            adv + recon_weight * recon,
            &[("gen", adv), ("recon", recon)],
        ),
        grad_fake_prob,
        grad_fake_images,
    })
}

/// Decay schedule for the reconstruction weight. Every schedule starts at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnnealSchedule {
    Constant,
    Linear { horizon: u64, floor: f64 },
    Exponential { rate: f64, floor: f64 },
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule::Linear {
            horizon: 10_000,
            floor: 0.0,
        }
    }
}

pub fn anneal_weight(step: u64, schedule: AnnealSchedule) -> f64 {
    match schedule {
        AnnealSchedule::Constant => 1.0,
        AnnealSchedule::Linear { horizon, floor } => {
            if horizon == 0 || step >= horizon {
                floor
            } else {
                let t = step as f64 / horizon as f64;
                (1.0 - t * (1.0 - floor)).max(floor)
            }
        }
        AnnealSchedule::Exponential { rate, floor } => {
            floor + (1.0 - floor) * (-rate * step as f64).exp()
        }
    }
}

// ---------------------------------------------------------------------------
// Multi-task VA + basic expressions

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprLoss {
    pub value: f64,
    pub grad: Vec<[f64; NUM_EXPRESSIONS]>,
}

/// Expression loss over the frames that carry a label, gradient w.r.t. the
/// pre-softmax scores. Unlabelled frames get a zero gradient.
pub fn expression_loss(
    logits: &[[f64; NUM_EXPRESSIONS]],
    targets: &[Option<usize>],
    mode: ExprLossMode,
) -> Result<ExprLoss> {
    same_len("expression_loss", logits.len(), targets.len())?;
    let mut grad = vec![[0.0; NUM_EXPRESSIONS]; logits.len()];
    let labelled = targets.iter().filter(|t| t.is_some()).count();
    if labelled == 0 {
        return Ok(ExprLoss { value: 0.0, grad });
    }
    let m = labelled as f64;
    let k = NUM_EXPRESSIONS as f64;
    let mut sum = 0.0;
    for ((z, t), g) in logits.iter().zip(targets).zip(grad.iter_mut()) {
        let Some(y) = *t else { continue };
        if y >= NUM_EXPRESSIONS {
            return Err(LossError::Shape(format!("expression class {y} out of range")));
        }
        let onehot = |c: usize| if c == y { 1.0 } else { 0.0 };
        match mode {
            ExprLossMode::CrossEntropy => {
                let p = softmax(z);
                sum += -p[y].max(f64::MIN_POSITIVE).ln();
                for c in 0..NUM_EXPRESSIONS {
                    g[c] = (p[c] - onehot(c)) / m;
                }
            }
            ExprLossMode::MsePreSoftmax => {
                for c in 0..NUM_EXPRESSIONS {
                    let d = z[c] - onehot(c);
                    sum += d * d / k;
                    g[c] = 2.0 * d / (k * m);
                }
            }
            ExprLossMode::MsePostSoftmax => {
                let p = softmax(z);
                let mut gp = [0.0; NUM_EXPRESSIONS];
                for c in 0..NUM_EXPRESSIONS {
                    let d = p[c] - onehot(c);
                    sum += d * d / k;
                    gp[c] = 2.0 * d / (k * m);
                }
                let dot: f64 = gp.iter().zip(&p).map(|(a, b)| a * b).sum();
                for c in 0..NUM_EXPRESSIONS {
                    g[c] = p[c] * (gp[c] - dot);
                }
            }
        }
    }
    Ok(ExprLoss {
        value: sum / m,
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultitaskWeights {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskLoss {
    pub bundle: LossBundle,
    pub grad_va: Vec<[f64; 2]>,
    pub grad_logits: Vec<[f64; NUM_EXPRESSIONS]>,
}

/// `alpha * L_VA + beta * L_expr`. A zero weight yields an exactly-zero
/// gradient for that head.
pub fn multitask_loss(
    va_pred: &[[f64; 2]],
    expr_logits: &[[f64; NUM_EXPRESSIONS]],
    va_target: &[[f64; 2]],
    expr_target: &[Option<usize>],
    weights: MultitaskWeights,
    va_mode: VaLossMode,
    expr_mode: ExprLossMode,
) -> Result<MultitaskLoss> {
    same_len("multitask outputs", va_pred.len(), expr_logits.len())?;
    let MultitaskWeights { alpha, beta } = weights;
    let va = va_loss(va_mode, va_pred, va_target)?;
    let expr = expression_loss(expr_logits, expr_target, expr_mode)?;
    let grad_va = if alpha == 0.0 {
        vec![[0.0; 2]; va_pred.len()]
    } else {
        va.grad.iter().map(|g| [alpha * g[0], alpha * g[1]]).collect()
    };
    let grad_logits = if beta == 0.0 {
        vec![[0.0; NUM_EXPRESSIONS]; expr_logits.len()]
    } else {
        expr.grad.iter().map(|g| g.map(|x| beta * x)).collect()
    };
    Ok(MultitaskLoss {
        bundle: LossBundle::with(
            alpha * va.value + beta * expr.value,
            &[("va", va.value), ("expr", expr.value)],
        ),
        grad_va,
        grad_logits,
    })
}
