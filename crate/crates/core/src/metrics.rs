//! Evaluation criteria: CCC for valence/arousal, and total accuracy plus
//! macro/weighted F1 for action units and basic expressions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AuVector, ConsolidatedFrame, Expression, AU_IDS, NUM_AUS, NUM_EXPRESSIONS};

pub use crate::losses::ccc as ccc_metric;

/// AU decision threshold on sigmoid outputs.
pub const AU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined on empty input")]
    Empty,
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
}

type Result<T> = std::result::Result<T, MetricError>;

fn aligned(what: &str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(MetricError::Misaligned(format!("{what}: {a} vs {b}")))
    }
}

/// Fraction of items whose prediction equals the truth. For AU vectors this is
/// exact-match accuracy: all eight bits must agree.
pub fn total_accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    aligned("total_accuracy", pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / pred.len() as f64)
}

/// Accuracy over individual AU decisions rather than whole vectors.
pub fn per_bit_accuracy(pred: &[AuVector], truth: &[AuVector]) -> Result<f64> {
    aligned("per_bit_accuracy", pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    let correct: usize = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| p.bits().iter().zip(t.bits()).filter(|(a, b)| **a == *b).count())
        .sum();
    Ok(correct as f64 / (pred.len() * NUM_AUS) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<f64>,
    /// Number of items whose true label is the class.
    pub support: Vec<u64>,
}

/// `2PR / (P + R)`, defined as 0 when `P + R = 0`.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn summarize(per_class: Vec<f64>, support: Vec<u64>) -> F1Scores {
    let macro_f1 = per_class.iter().sum::<f64>() / per_class.len().max(1) as f64;
    let total: u64 = support.iter().sum();
    let weighted_f1 = if total == 0 {
        0.0
    } else {
        per_class
            .iter()
            .zip(&support)
            .map(|(f, &s)| f * s as f64)
            .sum::<f64>()
            / total as f64
    };
    F1Scores {
        macro_f1,
        weighted_f1,
        per_class,
        support,
    }
}

/// One-vs-rest F1 for single-label multi-class predictions.
pub fn f1_multiclass(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<F1Scores> {
    aligned("f1_multiclass", pred.len(), truth.len())?;
    let mut tp = vec![0u64; n_classes];
    let mut fp = vec![0u64; n_classes];
    let mut fn_ = vec![0u64; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(MetricError::Misaligned(format!(
                "class index outside 0..{n_classes}"
            )));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class = (0..n_classes)
        .map(|c| f1_from_counts(tp[c], fp[c], fn_[c]))
        .collect();
    let support = (0..n_classes).map(|c| tp[c] + fn_[c]).collect();
    Ok(summarize(per_class, support))
}

/// Per-AU binary F1 (positive class = active) for multi-label predictions.
pub fn f1_multilabel(pred: &[AuVector], truth: &[AuVector]) -> Result<F1Scores> {
    aligned("f1_multilabel", pred.len(), truth.len())?;
    let mut per_class = Vec::with_capacity(NUM_AUS);
    let mut support = Vec::with_capacity(NUM_AUS);
    for k in 0..NUM_AUS {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (p, t) in pred.iter().zip(truth) {
            match (p.bits()[k], t.bits()[k]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        per_class.push(f1_from_counts(tp, fp, fn_));
        support.push(tp + fn_);
    }
    Ok(summarize(per_class, support))
}

pub fn threshold_aus(probs: &[f64; NUM_AUS]) -> AuVector {
    AuVector::from_bits(probs.map(|p| p >= AU_THRESHOLD))
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Va,
    Au,
    Expr,
    /// Every family for which outputs are supplied.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuAccuracy {
    #[default]
    ExactMatch,
    PerBit,
}

/// Model outputs aligned index-by-index with the frames being evaluated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelOutputs {
    pub va: Option<Vec<[f64; 2]>>,
    pub au_probs: Option<Vec<[f64; NUM_AUS]>>,
    pub expr_probs: Option<Vec<[f64; NUM_EXPRESSIONS]>>,
}

/// Evaluation summary. Tasks that were not evaluated are `None` (JSON `null`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ccc_v: Option<f64>,
    pub ccc_a: Option<f64>,
    pub total_accuracy: Option<f64>,
    pub f1_weighted: Option<f64>,
    pub f1_macro: Option<f64>,
    pub per_class_f1: Option<BTreeMap<String, f64>>,
}

pub fn evaluate(
    outputs: &ModelOutputs,
    frames: &[ConsolidatedFrame],
    task: EvalTask,
    au_accuracy: AuAccuracy,
) -> Result<MetricReport> {
    let want_va = matches!(task, EvalTask::Va) || (task == EvalTask::Joint && outputs.va.is_some());
    let want_au =
        matches!(task, EvalTask::Au) || (task == EvalTask::Joint && outputs.au_probs.is_some());
    let want_expr =
        matches!(task, EvalTask::Expr) || (task == EvalTask::Joint && outputs.expr_probs.is_some());
    if want_au && want_expr {
        return Err(MetricError::Misaligned(
            "AU and expression reports share columns; evaluate them separately".into(),
        ));
    }

    let mut report = MetricReport::default();

    if want_va {
        let va = outputs
            .va
            .as_ref()
            .ok_or_else(|| MetricError::Misaligned("no VA outputs".into()))?;
        aligned("va outputs", va.len(), frames.len())?;
        let (mut pv, mut pa, mut tv, mut ta) = (vec![], vec![], vec![], vec![]);
        for (p, f) in va.iter().zip(frames) {
            if let Some(t) = f.va {
                pv.push(p[0]);
                pa.push(p[1]);
                tv.push(t.valence);
                ta.push(t.arousal);
            }
        }
        if pv.len() < 2 {
            return Err(MetricError::Empty);
        }
        report.ccc_v = Some(ccc_metric(&pv, &tv).map_err(|e| MetricError::Misaligned(e.to_string()))?);
        report.ccc_a = Some(ccc_metric(&pa, &ta).map_err(|e| MetricError::Misaligned(e.to_string()))?);
    }

    if want_au {
        let probs = outputs
            .au_probs
            .as_ref()
            .ok_or_else(|| MetricError::Misaligned("no AU outputs".into()))?;
        aligned("au outputs", probs.len(), frames.len())?;
        let (pred, truth): (Vec<AuVector>, Vec<AuVector>) = probs
            .iter()
            .zip(frames)
            .filter_map(|(p, f)| f.aus.map(|t| (threshold_aus(p), t)))
            .unzip();
        report.total_accuracy = Some(match au_accuracy {
            AuAccuracy::ExactMatch => total_accuracy(&pred, &truth)?,
            AuAccuracy::PerBit => per_bit_accuracy(&pred, &truth)?,
        });
        let f1 = f1_multilabel(&pred, &truth)?;
        report.f1_weighted = Some(f1.weighted_f1);
        report.f1_macro = Some(f1.macro_f1);
        report.per_class_f1 = Some(
            AU_IDS
                .iter()
                .zip(&f1.per_class)
                .map(|(au, f)| (format!("au{au}"), *f))
                .collect(),
        );
    }

    if want_expr {
        let probs = outputs
            .expr_probs
            .as_ref()
            .ok_or_else(|| MetricError::Misaligned("no expression outputs".into()))?;
        aligned("expression outputs", probs.len(), frames.len())?;
        let (pred, truth): (Vec<usize>, Vec<usize>) = probs
            .iter()
            .zip(frames)
            .filter_map(|(p, f)| f.expression.map(|t| (argmax(p), t.index())))
            .unzip();
        report.total_accuracy = Some(total_accuracy(&pred, &truth)?);
        let f1 = f1_multiclass(&pred, &truth, NUM_EXPRESSIONS)?;
        report.f1_weighted = Some(f1.weighted_f1);
        report.f1_macro = Some(f1.macro_f1);
        report.per_class_f1 = Some(
            Expression::ALL
                .iter()
                .zip(&f1.per_class)
                .map(|(e, f)| (e.name().to_string(), *f))
                .collect(),
        );
    }

    Ok(report)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Aligned plain-text table: one row per labelled report.
pub fn render_table(rows: &[(String, MetricReport)]) -> String {
    let header = ["row", "CCC-V", "CCC-A", "Total Acc", "F1 weighted", "F1 macro"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|(label, r)| {
            [
                label.clone(),
                cell(r.ccc_v),
                cell(r.ccc_a),
                cell(r.total_accuracy),
                cell(r.f1_weighted),
                cell(r.f1_macro),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, " | {c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &body {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
