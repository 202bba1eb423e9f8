//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use sepbench::Label;

/// Top-two eigenpairs of the sample covariance, by a dense symmetric eigensolver.
pub fn covariance_oracle(data: &[f64], rows: usize, dim: usize) -> ([f64; 2], [Vec<f64>; 2]) {
    let x = DMatrix::from_row_slice(rows, dim, data);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(rows, dim, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (rows as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vec = |k: usize| eig.eigenvectors.column(order[k]).iter().copied().collect::<Vec<f64>>();
    ([eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]], [vec(0), vec(1)])
}

/// Lowest two-cluster SSE over every assignment of the points.
pub fn exhaustive_two_means(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let mut sum = [[0.0; 2]; 2];
        let mut count = [0usize; 2];
        for (i, p) in points.iter().enumerate() {
            let c = ((mask >> i) & 1) as usize;
            sum[c][0] += p[0];
            sum[c][1] += p[1];
            count[c] += 1;
        }
        let centroids: Vec<[f64; 2]> = (0..2)
            .map(|c| {
                let m = count[c].max(1) as f64;
                [sum[c][0] / m, sum[c][1] / m]
            })
            .collect();
        let cost: f64 = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let c = &centroids[((mask >> i) & 1) as usize];
                (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
            })
            .sum();
        best = best.min(cost);
    }
    best
}

/// (FPR, FNR) at `t` by direct counting, fake being positive.
pub fn rates(scores: &[f64], labels: &[Label], t: f64) -> (f64, f64) {
    let pos = labels.iter().filter(|l| l.is_fake()).count() as f64;
    let neg = labels.len() as f64 - pos;
    let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !l.is_fake()).count() as f64;
    let fn_ = scores.iter().zip(labels).filter(|(s, l)| **s < t && l.is_fake()).count() as f64;
    (fp / neg, fn_ / pos)
}

/// (eer, threshold): sweep every distinct score (plus +inf) and interpolate
/// linearly at the first point where FPR reaches FNR.
pub fn eer_oracle(scores: &[f64], labels: &[Label]) -> (f64, f64) {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.insert(0, f64::INFINITY);
    let sweep: Vec<(f64, f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let (fpr, fnr) = rates(scores, labels, t);
            (t, fpr, fnr)
        })
        .collect();
    for k in 0..sweep.len() {
        let (t1, fpr1, fnr1) = sweep[k];
        if fpr1 < fnr1 {
            continue;
        }
        if fpr1 == fnr1 || k == 0 {
            return (fpr1, t1);
        }
        let (t0, fpr0, fnr0) = sweep[k - 1];
        let a = (fnr0 - fpr0) / ((fnr0 - fpr0) - (fnr1 - fpr1));
        let t = if t0.is_infinite() { t1 } else { t0 + a * (t1 - t0) };
        return (fpr0 + a * (fpr1 - fpr0), t);
    }
    unreachable!("the lowest threshold accepts everything")
}

/// Probability that a random fake outscores a random real, ties counting one half.
pub fn mann_whitney(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (sf, lf) in scores.iter().zip(labels) {
        if !lf.is_fake() {
            continue;
        }
        for (sr, lr) in scores.iter().zip(labels) {
            if lr.is_fake() {
                continue;
            }
            pairs += 1.0;
            if sf > sr {
                wins += 1.0;
            } else if sf == sr {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Mean binary cross-entropy computed from probabilities, without softplus tricks.
pub fn mean_bce(features: &[f64], targets: &[f64], weights: &[f64], bias: f64) -> f64 {
    let dim = weights.len();
    let mut total = 0.0;
    for (row, &y) in features.chunks_exact(dim).zip(targets) {
        let z = bias + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>();
        let p = 1.0 / (1.0 + (-z).exp());
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    total / targets.len() as f64
}

/// Largest relative error between the analytic gradient and central differences.
pub fn max_gradient_error(
    features: &[f64],
    targets: &[f64],
    weights: &[f64],
    bias: f64,
    analytic_w: &[f64],
    analytic_b: f64,
    eps: f64,
) -> f64 {
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    for j in 0..weights.len() {
        let mut plus = weights.to_vec();
        let mut minus = weights.to_vec();
        plus[j] += eps;
        minus[j] -= eps;
        let fd = (mean_bce(features, targets, &plus, bias) - mean_bce(features, targets, &minus, bias)) / (2.0 * eps);
        worst = worst.max(rel(analytic_w[j], fd));
    }
    let fd = (mean_bce(features, targets, weights, bias + eps) - mean_bce(features, targets, weights, bias - eps))
        / (2.0 * eps);
    worst.max(rel(analytic_b, fd))
}
