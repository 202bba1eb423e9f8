//! Principal component analysis down to two dimensions.
//!
//! The data matrix is mean-centered and its two leading right singular vectors
//! become the principal axes. The decomposition never forms the covariance
//! matrix: tall inputs (N >= D) are first reduced to their D x D triangular
//! factor with Householder QR, and the singular vectors of that factor (or of
//! the transposed data, when N < D) come from one-sided Jacobi rotations.
//! Explained variances use the sample normalization `sigma^2 / (N - 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingSet;
use crate::manifest::Label;

/// Target dimensionality of the reduction.
pub const COMPONENTS: usize = 2;

const MAX_JACOBI_SWEEPS: usize = 80;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("PCA needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("PCA to 2D needs at least 2 input dimensions, got {0}")]
    TooFewDimensions(usize),
    #[error("degenerate input: all rows are identical (zero variance)")]
    ZeroVariance,
    #[error("dimension mismatch: model expects {expected}, set has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("Jacobi SVD did not converge in {0} sweeps")]
    NoConvergence(usize),
}

/// Fitted reduction parameters: the mean and the two principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Rows are unit-norm, mutually orthogonal principal axes.
    pub components: [Vec<f64>; COMPONENTS],
    /// Sample variance along each axis, descending.
    pub explained_variance: [f64; COMPONENTS],
    pub n_samples: usize,
    /// Set when the centered data has rank 1; the second axis is then an
    /// arbitrary unit vector orthogonal to the first.
    pub rank_deficient: bool,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// 2D points with the ids (and optional labels) of the rows they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEmbeddings {
    pub points: Vec<[f64; 2]>,
    pub ids: Vec<String>,
    pub labels: Option<Vec<Label>>,
}

impl ReducedEmbeddings {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A fitted map from embeddings to the plane.
pub trait Reducer {
    fn reduce(&self, set: &EmbeddingSet) -> Result<ReducedEmbeddings, PcaError>;
}

impl Reducer for PcaModel {
    fn reduce(&self, set: &EmbeddingSet) -> Result<ReducedEmbeddings, PcaError> {
        project(self, set)
    }
}

pub fn fit_pca(set: &EmbeddingSet) -> Result<PcaModel, PcaError> {
    let data: Vec<f64> = set.data().iter().map(|&v| f64::from(v)).collect();
    fit_pca_rows(&data, set.rows(), set.dim())
}

/// Fits PCA on a row-major `rows x dim` matrix.
pub fn fit_pca_rows(data: &[f64], rows: usize, dim: usize) -> Result<PcaModel, PcaError> {
    assert_eq!(data.len(), rows * dim, "data length must equal rows * dim");
    if rows < 3 {
        return Err(PcaError::TooFewRows(rows));
    }
    if dim < COMPONENTS {
        return Err(PcaError::TooFewDimensions(dim));
    }

    let mean = column_means(data, rows, dim);
    let max_abs = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // Columns of `work` are the vectors Jacobi orthogonalizes; after convergence
    // the normalized columns are the right singular vectors of the centered data.
    let mut work = if rows >= dim {
        transposed_r_factor(data, &mean, rows, dim)
    } else {
        centered_rows(data, &mean, rows, dim)
    };
    one_sided_jacobi(&mut work)?;

    let mut norms: Vec<(f64, usize)> = work
        .iter()
        .enumerate()
        .map(|(j, col)| (dot(col, col).sqrt(), j))
        .collect();
    // descending by singular value, ties toward the lower column
    norms.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let (sigma0, j0) = norms[0];
    let (sigma1, j1) = norms[1];

    let scale = max_abs * (rows as f64).sqrt() * (dim as f64).sqrt();
    if sigma0 <= 64.0 * f64::EPSILON * scale {
        return Err(PcaError::ZeroVariance);
    }
    let first = normalized(&work[j0], sigma0);
    let rank_tol = sigma0 * (rows.max(dim) as f64) * f64::EPSILON;
    let rank_deficient = sigma1 <= rank_tol;
    let second = if rank_deficient {
        log::warn!("PCA input has rank 1; the second principal axis is arbitrary");
        orthogonal_unit(&first)
    } else {
        normalized(&work[j1], sigma1)
    };

    let denom = (rows - 1) as f64;
    let explained_variance = [
        sigma0 * sigma0 / denom,
        if rank_deficient { 0.0 } else { sigma1 * sigma1 / denom },
    ];
    Ok(PcaModel {
        mean,
        components: [sign_fixed(first), sign_fixed(second)],
        explained_variance,
        n_samples: rows,
        rank_deficient,
    })
}

/// Projects each row onto the principal axes: `components . (x - mean)`.
pub fn project(model: &PcaModel, set: &EmbeddingSet) -> Result<ReducedEmbeddings, PcaError> {
    if set.dim() != model.dim() {
        return Err(PcaError::DimensionMismatch {
            expected: model.dim(),
            actual: set.dim(),
        });
    }
    let points = (0..set.rows())
        .map(|i| project_row(model, set.row(i)))
        .collect();
    Ok(ReducedEmbeddings {
        points,
        ids: set.ids().to_vec(),
        labels: set.labels().map(<[Label]>::to_vec),
    })
}

fn project_row(model: &PcaModel, row: &[f32]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (o, axis) in out.iter_mut().zip(&model.components) {
        *o = row
            .iter()
            .zip(&model.mean)
            .zip(axis)
            .map(|((&x, m), a)| (f64::from(x) - m) * a)
            .sum();
    }
    out
}

/// Two-pass column means (the second pass corrects first-pass rounding).
fn column_means(data: &[f64], rows: usize, dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = rows as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut correction = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((c, v), m) in correction.iter_mut().zip(row).zip(&mean) {
            *c += v - m;
        }
    }
    for (m, c) in mean.iter_mut().zip(&correction) {
        *m += c / n;
    }
    mean
}

/// Centered data rows, i.e. the columns of the transposed centered matrix.
fn centered_rows(data: &[f64], mean: &[f64], rows: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|i| {
            data[i * dim..(i + 1) * dim]
                .iter()
                .zip(mean)
                .map(|(v, m)| v - m)
                .collect()
        })
        .collect()
}

/// Householder QR of the centered `rows x dim` matrix (rows >= dim).
///
/// Returns the rows of the triangular factor R, which are the columns of R^T.
/// X = QR shares its right singular vectors with R, which are the left
/// singular vectors of R^T.
fn transposed_r_factor(data: &[f64], mean: &[f64], rows: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|j| (0..rows).map(|i| data[i * dim + j] - mean[j]).collect())
        .collect();

    for k in 0..dim {
        let (head, tail) = cols.split_at_mut(k + 1);
        let x = &mut head[k][k..];
        let alpha = dot(x, x).sqrt();
        if alpha == 0.0 {
            continue;
        }
        // v = x + sign(x0) * |x| * e0, applied as H = I - 2 v v^T / (v^T v)
        let beta = if x[0] >= 0.0 { -alpha } else { alpha };
        let mut v = x.to_vec();
        v[0] -= beta;
        let vtv = dot(&v, &v);
        x[0] = beta;
        x[1..].iter_mut().for_each(|e| *e = 0.0);
        for col in tail.iter_mut() {
            let seg = &mut col[k..];
            let f = 2.0 * dot(&v, seg) / vtv;
            for (s, vi) in seg.iter_mut().zip(&v) {
                *s -= f * vi;
            }
        }
    }

    (0..dim)
        .map(|i| (0..dim).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect())
        .collect()
}

/// Orthogonalizes the columns of `cols` in place with Hestenes rotations.
fn one_sided_jacobi(cols: &mut [Vec<f64>]) -> Result<(), PcaError> {
    let n = cols.len();
    let m = cols.first().map_or(0, Vec::len);
    let tol = f64::EPSILON * (m as f64);
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();

    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                let gamma = dot(cp, cq);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
                norms[p] = dot(cp, cp);
                norms[q] = dot(cq, cq);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(PcaError::NoConvergence(MAX_JACOBI_SWEEPS))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized(v: &[f64], norm: f64) -> Vec<f64> {
    v.iter().map(|x| x / norm).collect()
}

/// Unit vector orthogonal to unit `u`: Gram-Schmidt on the basis vector where `u` is smallest.
fn orthogonal_unit(u: &[f64]) -> Vec<f64> {
    let j = u
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, _)| j)
        .expect("dim >= 2");
    let mut v = vec![0.0; u.len()];
    v[j] = 1.0;
    for _ in 0..2 {
        let d = dot(&v, u);
        v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= d * ui);
    }
    let norm = dot(&v, &v).sqrt();
    normalized(&v, norm)
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
fn sign_fixed(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}
