//! Lloyd's K-means over 2D points with seeded k-means++ initialization.
//!
//! Each restart draws from its own ChaCha8 stream derived from the seed, so
//! results are bit-identical across runs and platforms. The winner is the
//! restart with the lowest inertia, ties going to the lower restart index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pca::ReducedEmbeddings;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITERATIONS: usize = 300;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum KmeansError {
    #[error("cannot form {clusters} clusters from {points} points")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("cluster count must be at least 1")]
    NoClusters,
    #[error("restart count must be at least 1")]
    NoRestarts,
    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),
    #[error("non-finite coordinate at centroid {0}")]
    NonFiniteCentroid(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub clusters: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop when the relative inertia decrease falls below this.
    pub tolerance: f64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            seed: DEFAULT_SEED,
            restarts: DEFAULT_RESTARTS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centroids: Vec<[f64; 2]>,
    pub assignments: Vec<usize>,
    /// Total within-cluster sum of squared distances.
    pub inertia: f64,
    /// Lloyd iterations run by the winning restart.
    pub iterations: usize,
    pub seed: u64,
    /// Index of the winning restart.
    pub restart: usize,
}

/// Clusters reduced embeddings into `clusters` groups with default settings.
pub fn kmeans(
    points: &ReducedEmbeddings,
    clusters: usize,
    seed: u64,
) -> Result<ClusteringResult, KmeansError> {
    kmeans_points(
        &points.points,
        &KmeansConfig {
            clusters,
            seed,
            ..KmeansConfig::default()
        },
    )
}

pub fn kmeans_points(
    points: &[[f64; 2]],
    config: &KmeansConfig,
) -> Result<ClusteringResult, KmeansError> {
    let k = config.clusters;
    if k == 0 {
        return Err(KmeansError::NoClusters);
    }
    if config.restarts == 0 {
        return Err(KmeansError::NoRestarts);
    }
    if points.len() < k {
        return Err(KmeansError::TooFewPoints {
            points: points.len(),
            clusters: k,
        });
    }
    if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(KmeansError::NonFinitePoint(i));
    }

    let mut best: Option<ClusteringResult> = None;
    for restart in 0..config.restarts {
        let mut rng = restart_rng(config.seed, restart);
        let init = kmeans_plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, config, restart);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Maps each point to its nearest centroid (squared Euclidean, ties to the lower index).
pub fn assign(centroids: &[[f64; 2]], points: &[[f64; 2]]) -> Result<Vec<usize>, KmeansError> {
    if centroids.is_empty() {
        return Err(KmeansError::NoClusters);
    }
    if let Some(i) = centroids.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(KmeansError::NonFiniteCentroid(i));
    }
    if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(KmeansError::NonFinitePoint(i));
    }
    Ok(points.iter().map(|p| nearest(centroids, p).0).collect())
}

/// Recomputed sum of squared distances of each point to its assigned centroid.
pub fn sse(points: &[[f64; 2]], assignments: &[usize], centroids: &[[f64; 2]]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stream 0 is reserved for visualization sampling
    rng.set_stream(restart as u64 + 1);
    rng
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest(centroids: &[[f64; 2]], p: &[f64; 2]) -> (usize, f64) {
    let mut best = (0, sq_dist(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn uniform_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Index drawn with probability proportional to `weights` (all non-negative, positive sum).
fn weighted_index(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 && acc > target {
            return i;
        }
    }
    // rounding can leave target >= acc; fall back to the last weighted point
    weights.iter().rposition(|&w| w > 0.0).expect("positive total")
}

fn kmeans_plus_plus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[uniform_index(rng, points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            weighted_index(&d2, total, rng)
        } else {
            uniform_index(rng, points.len())
        };
        let c = points[pick];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
    }
    centroids
}

fn lloyd(
    points: &[[f64; 2]],
    mut centroids: Vec<[f64; 2]>,
    config: &KmeansConfig,
    restart: usize,
) -> ClusteringResult {
    let k = centroids.len();
    let mut assignments = vec![0usize; points.len()];
    let mut distances = vec![0.0f64; points.len()];
    let mut previous = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=config.max_iterations.max(1) {
        iterations = iter;
        for ((a, d), p) in assignments.iter_mut().zip(distances.iter_mut()).zip(points) {
            (*a, *d) = nearest(&centroids, p);
        }
        repair_empty_clusters(&mut assignments, &mut distances, k);
        centroids = cluster_means(points, &assignments, k);
        inertia = sse(points, &assignments, &centroids);
        debug_assert!(
            inertia <= previous * (1.0 + 1e-12) + 1e-12,
            "inertia increased from {previous} to {inertia}"
        );
        let converged =
            inertia == 0.0 || (previous.is_finite() && previous - inertia <= config.tolerance * previous);
        previous = inertia;
        if converged {
            break;
        }
    }

    ClusteringResult {
        centroids,
        assignments,
        inertia,
        iterations,
        seed: config.seed,
        restart,
    }
}

/// Moves the point farthest from its centroid into each empty cluster.
///
/// Only points whose cluster keeps at least one other member are eligible, so
/// repairing one cluster never empties another.
fn repair_empty_clusters(assignments: &mut [usize], distances: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] > 1 && far.is_none_or(|f| distances[i] > distances[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("N >= k guarantees a donor cluster");
        sizes[assignments[i]] -= 1;
        sizes[empty] = 1;
        assignments[i] = empty;
        distances[i] = 0.0;
    }
}

fn cluster_means(points: &[[f64; 2]], assignments: &[usize], k: usize) -> Vec<[f64; 2]> {
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| [s[0] / n as f64, s[1] / n as f64])
        .collect()
}
