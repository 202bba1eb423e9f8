//! Detection metrics: ROC, EER, AUC and fixed-threshold rates.
//!
//! Fake is the positive class. An item is predicted fake iff its score is
//! greater than or equal to the threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Label, SplitManifest};
use crate::probe::ScoreSet;

/// Conventional fixed decision threshold for sigmoid scores.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("both real and fake items are required ({real} real, {fake} fake)")]
    SingleClass { real: usize, fake: usize },
    #[error("score set carries no labels")]
    Unlabeled,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at row {0}")]
    NonFiniteScore(usize),
    #[error("score id {0:?} is not in the manifest")]
    UnknownId(String),
}

/// One operating point: predicting fake for scores >= `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points ordered by strictly decreasing threshold.
///
/// The first point is a sentinel at threshold +inf with (FPR, TPR) = (0, 0);
/// the last point, at the smallest score, is (1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub eer: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub accuracy: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub hter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub eer: f64,
    pub eer_threshold: f64,
    pub auc: f64,
    pub hter_at_half: f64,
    pub accuracy_at_half: f64,
    pub tpr_at_half: f64,
    pub tnr_at_half: f64,
    /// The same rates evaluated at `eer_threshold`, for threshold-shift comparisons.
    pub at_eer_threshold: ThresholdMetrics,
    /// Accuracy at the fixed threshold per method tag; empty without a manifest.
    pub per_method: BTreeMap<String, f64>,
}

pub fn roc(scores: &ScoreSet) -> Result<RocCurve, MetricsError> {
    roc_curve(&scores.scores, scores.labels.as_deref().ok_or(MetricsError::Unlabeled)?)
}

/// Builds the ROC curve with one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<RocCurve, MetricsError> {
    let (negatives, positives) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            match labels[order[i]] {
                Label::Fake => tp += 1,
                Label::Real => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    Ok(RocCurve {
        points,
        positives,
        negatives,
    })
}

/// Equal error rate by linear interpolation on the segment where FPR - FNR changes sign.
///
/// The threshold is interpolated on the same segment. When that segment starts
/// at the +inf sentinel, the threshold of its other end is used.
pub fn eer(curve: &RocCurve) -> EerPoint {
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    let pts = &curve.points;
    let k = pts
        .iter()
        .position(|p| gap(p) >= 0.0)
        .expect("a valid curve ends at (1, 1)");
    let cur = pts[k];
    if gap(&cur) == 0.0 {
        return EerPoint {
            eer: cur.fpr,
            threshold: cur.threshold,
        };
    }
    let prev = pts[k - 1];
    let (g0, g1) = (gap(&prev), gap(&cur));
    let alpha = -g0 / (g1 - g0);
    let eer = prev.fpr + alpha * (cur.fpr - prev.fpr);
    let threshold = if prev.threshold.is_finite() {
        prev.threshold + alpha * (cur.threshold - prev.threshold)
    } else {
        cur.threshold
    };
    EerPoint { eer, threshold }
}

/// Trapezoidal area under TPR(FPR).
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn threshold_metrics(scores: &ScoreSet, threshold: f64) -> Result<ThresholdMetrics, MetricsError> {
    threshold_metrics_raw(
        &scores.scores,
        scores.labels.as_deref().ok_or(MetricsError::Unlabeled)?,
        threshold,
    )
}

pub fn threshold_metrics_raw(
    scores: &[f64],
    labels: &[Label],
    threshold: f64,
) -> Result<ThresholdMetrics, MetricsError> {
    let (negatives, positives) = class_counts(scores, labels)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, Label::Fake) => tp += 1,
            (false, Label::Real) => tn += 1,
            _ => {}
        }
    }
    let tpr = tp as f64 / positives as f64;
    let tnr = tn as f64 / negatives as f64;
    Ok(ThresholdMetrics {
        threshold,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        tpr,
        tnr,
        hter: 1.0 - (tpr + tnr) / 2.0,
    })
}

/// Fixed-threshold accuracy within each method-tag group of the manifest.
pub fn per_method_accuracy(
    scores: &ScoreSet,
    manifest: &SplitManifest,
    threshold: f64,
) -> Result<BTreeMap<String, f64>, MetricsError> {
    let labels = scores.labels.as_deref().ok_or(MetricsError::Unlabeled)?;
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((id, &s), &l) in scores.ids.iter().zip(&scores.scores).zip(labels) {
        let record = manifest
            .get(id)
            .ok_or_else(|| MetricsError::UnknownId(id.clone()))?;
        let entry = tally.entry(record.method_tag.as_str()).or_default();
        entry.1 += 1;
        if (s >= threshold) == l.is_fake() {
            entry.0 += 1;
        }
    }
    Ok(tally
        .into_iter()
        .map(|(tag, (correct, total))| (tag.to_string(), correct as f64 / total as f64))
        .collect())
}

/// EER, AUC and fixed-threshold rates in one pass over a labeled score set.
pub fn metric_bundle(
    scores: &ScoreSet,
    manifest: Option<&SplitManifest>,
    threshold: f64,
) -> Result<MetricBundle, MetricsError> {
    let curve = roc(scores)?;
    let eer_point = eer(&curve);
    let fixed = threshold_metrics(scores, threshold)?;
    let at_eer_threshold = threshold_metrics(scores, eer_point.threshold)?;
    let per_method = match manifest {
        Some(m) => per_method_accuracy(scores, m, threshold)?,
        None => BTreeMap::new(),
    };
    Ok(MetricBundle {
        eer: eer_point.eer,
        eer_threshold: eer_point.threshold,
        auc: auc(&curve),
        hter_at_half: fixed.hter,
        accuracy_at_half: fixed.accuracy,
        tpr_at_half: fixed.tpr,
        tnr_at_half: fixed.tnr,
        at_eer_threshold,
        per_method,
    })
}

/// `method<TAB>accuracy` lines, sorted by method tag.
pub fn per_method_tsv(per_method: &BTreeMap<String, f64>) -> String {
    per_method
        .iter()
        .map(|(tag, acc)| format!("{tag}\t{acc}\n"))
        .collect()
}

/// (negatives, positives) after validating lengths and finiteness.
fn class_counts(scores: &[f64], labels: &[Label]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let fake = labels.iter().filter(|l| l.is_fake()).count();
    let real = labels.len() - fake;
    if fake == 0 || real == 0 {
        return Err(MetricsError::SingleClass { real, fake });
    }
    Ok((real, fake))
}
