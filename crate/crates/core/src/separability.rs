//! Backbone separability: how well an unsupervised 2-cluster partition of
//! PCA-reduced embeddings agrees with the true real/fake labels.
//!
//! The pipeline is `fit_pca -> project -> kmeans -> assign_clusters_to_labels`.
//! Clusters carry no class identity, so each cluster is mapped to the label
//! that maximizes accuracy. For two clusters this means trying both
//! bijections and flipping when the identity mapping scores below 50%.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingSet;
use crate::kmeans::{self, KmeansConfig, KmeansError};
use crate::manifest::{Label, Split};
use crate::pca::{self, PcaError, PcaModel, ReducedEmbeddings};

/// Number of points kept for scatter plots.
pub const VIZ_SAMPLE_SIZE: usize = 1000;

/// Largest cluster count for which all binary labelings are enumerated.
pub const MAX_LABELED_CLUSTERS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum SeparabilityError {
    #[error("embedding set carries no labels")]
    Unlabeled,
    #[error("both classes are required ({real} real, {fake} fake)")]
    SingleClass { real: usize, fake: usize },
    #[error("cluster-to-label assignment needs at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("at most {MAX_LABELED_CLUSTERS} clusters are supported, got {0}")]
    TooManyClusters(usize),
    #[error("{assignments} assignments but {labels} labels")]
    LengthMismatch { assignments: usize, labels: usize },
    #[error("assignment {value} at row {row} is not a valid cluster index")]
    InvalidAssignment { row: usize, value: usize },
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Kmeans(#[from] KmeansError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityConfig {
    pub clusters: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for SeparabilityConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            seed: kmeans::DEFAULT_SEED,
            restarts: kmeans::DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    /// Class assigned to each cluster index.
    pub cluster_to_label: Vec<Label>,
    pub accuracy: f64,
    /// True when the reference orientation (cluster 0 real) was not chosen.
    pub reversed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VizPoint {
    pub x: f64,
    pub y: f64,
    pub label: Label,
    pub cluster: usize,
}

/// Everything needed to re-run a measurement bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityProvenance {
    pub backbone_name: String,
    pub split: Option<Split>,
    pub rows: usize,
    pub dim: usize,
    pub payload_crc32: u32,
    pub seed: u64,
    pub clusters: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub kmeans_init: String,
    pub kmeans_restart: usize,
    pub kmeans_iterations: usize,
    pub inertia: f64,
    pub centroids: Vec<[f64; 2]>,
    pub pca_fit: String,
    pub cluster_labeling: String,
    pub pca: PcaModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub accuracy: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub cluster_to_label: Vec<Label>,
    pub reversed: bool,
    pub viz_sample: Vec<VizPoint>,
    pub provenance: SeparabilityProvenance,
}

pub fn measure_separability(
    set: &EmbeddingSet,
    config: &SeparabilityConfig,
) -> Result<SeparabilityReport, SeparabilityError> {
    let labels = set.labels().ok_or(SeparabilityError::Unlabeled)?;
    check_both_classes(labels)?;
    if config.clusters < 2 {
        return Err(SeparabilityError::TooFewClusters(config.clusters));
    }
    if config.clusters > MAX_LABELED_CLUSTERS {
        return Err(SeparabilityError::TooManyClusters(config.clusters));
    }

    let model = pca::fit_pca(set)?;
    let reduced = pca::project(&model, set)?;
    let kconfig = KmeansConfig {
        clusters: config.clusters,
        seed: config.seed,
        restarts: config.restarts,
        ..KmeansConfig::default()
    };
    let clustering = kmeans::kmeans_points(&reduced.points, &kconfig)?;
    let mapping = assign_clusters_to_labels(&clustering.assignments, labels, config.clusters)?;

    let (mut tp, mut tn, mut fake) = (0usize, 0usize, 0usize);
    for (&cluster, &truth) in clustering.assignments.iter().zip(labels) {
        let predicted = mapping.cluster_to_label[cluster];
        match (truth, predicted) {
            (Label::Fake, Label::Fake) => tp += 1,
            (Label::Real, Label::Real) => tn += 1,
            _ => {}
        }
        fake += usize::from(truth.is_fake());
    }
    let real = labels.len() - fake;
    let viz_sample = sample_for_viz(&reduced, &clustering.assignments, labels, config.seed);

    Ok(SeparabilityReport {
        accuracy: mapping.accuracy,
        tpr: tp as f64 / fake as f64,
        tnr: tn as f64 / real as f64,
        cluster_to_label: mapping.cluster_to_label,
        reversed: mapping.reversed,
        viz_sample,
        provenance: SeparabilityProvenance {
            backbone_name: set.backbone_name().to_string(),
            split: set.split(),
            rows: set.rows(),
            dim: set.dim(),
            payload_crc32: set.payload_crc32(),
            seed: config.seed,
            clusters: config.clusters,
            restarts: config.restarts,
            max_iterations: kconfig.max_iterations,
            tolerance: kconfig.tolerance,
            kmeans_init: "k-means++".into(),
            kmeans_restart: clustering.restart,
            kmeans_iterations: clustering.iterations,
            inertia: clustering.inertia,
            centroids: clustering.centroids,
            pca_fit: "refit on the measured set".into(),
            cluster_labeling: if config.clusters == 2 {
                "best of the two cluster/label bijections".into()
            } else {
                "best binary labeling over all 2^n cluster maps (extension beyond n = 2)".into()
            },
            pca: model,
        },
    })
}

/// Maps clusters to labels so that accuracy is maximal.
///
/// With two clusters only the two bijections are considered and the identity
/// wins ties. With more clusters every binary labeling is tried; ties prefer
/// labelings that keep cluster 0 real, then the lowest labeling in
/// enumeration order. `reversed` reports that cluster 0 ended up fake.
pub fn assign_clusters_to_labels(
    assignments: &[usize],
    labels: &[Label],
    clusters: usize,
) -> Result<LabelAssignment, SeparabilityError> {
    if assignments.len() != labels.len() {
        return Err(SeparabilityError::LengthMismatch {
            assignments: assignments.len(),
            labels: labels.len(),
        });
    }
    if clusters < 2 {
        return Err(SeparabilityError::TooFewClusters(clusters));
    }
    if clusters > MAX_LABELED_CLUSTERS {
        return Err(SeparabilityError::TooManyClusters(clusters));
    }
    check_both_classes(labels)?;

    // per-cluster (real, fake) counts
    let mut counts = vec![[0usize; 2]; clusters];
    for (row, (&a, &l)) in assignments.iter().zip(labels).enumerate() {
        if a >= clusters {
            return Err(SeparabilityError::InvalidAssignment { row, value: a });
        }
        counts[a][l.as_u8() as usize] += 1;
    }
    let n = labels.len() as f64;
    let correct = |mask: u32| -> usize {
        counts
            .iter()
            .enumerate()
            .map(|(c, tally)| tally[((mask >> c) & 1) as usize])
            .sum()
    };
    let to_labels = |mask: u32| -> Vec<Label> {
        (0..clusters)
            .map(|c| if (mask >> c) & 1 == 1 { Label::Fake } else { Label::Real })
            .collect()
    };

    let best_mask = if clusters == 2 {
        let (identity, swapped) = (0b10u32, 0b01u32);
        if correct(swapped) > correct(identity) {
            swapped
        } else {
            identity
        }
    } else {
        let mut best = 0u32;
        for mask in 1..(1u32 << clusters) {
            let (c, b) = (correct(mask), correct(best));
            // cluster 0 real (bit 0 clear) is preferred among equal scores
            if c > b || (c == b && mask & 1 == 0 && best & 1 == 1) {
                best = mask;
            }
        }
        best
    };

    Ok(LabelAssignment {
        cluster_to_label: to_labels(best_mask),
        accuracy: correct(best_mask) as f64 / n,
        reversed: best_mask & 1 == 1,
    })
}

/// Uniform sample without replacement of `min(N, 1000)` aligned points.
///
/// Sampled rows keep their original relative order.
pub fn sample_for_viz(
    points: &ReducedEmbeddings,
    assignments: &[usize],
    labels: &[Label],
    seed: u64,
) -> Vec<VizPoint> {
    let n = points.len().min(assignments.len()).min(labels.len());
    let rows: Vec<usize> = if n <= VIZ_SAMPLE_SIZE {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, n, VIZ_SAMPLE_SIZE).into_vec();
        rows.sort_unstable();
        rows
    };
    rows.into_iter()
        .map(|i| VizPoint {
            x: points.points[i][0],
            y: points.points[i][1],
            label: labels[i],
            cluster: assignments[i],
        })
        .collect()
}

fn check_both_classes(labels: &[Label]) -> Result<(), SeparabilityError> {
    let fake = labels.iter().filter(|l| l.is_fake()).count();
    let real = labels.len() - fake;
    if fake == 0 || real == 0 {
        return Err(SeparabilityError::SingleClass { real, fake });
    }
    Ok(())
}
