//! Measuring how well frozen image embeddings separate real from fake images.
//!
//! The pipeline reads per-split embedding dumps (EMB1), joins them with a split
//! manifest, and produces two kinds of numbers per backbone:
//!
//! * **separability**: PCA to two dimensions, K-means, and the accuracy of the
//!   best cluster-to-label mapping ([`separability::measure_separability`]);
//! * **transfer**: a linear probe trained on one split and scored on the
//!   others, summarized by EER, AUC and HTER ([`probe`], [`metrics`]).
//!
//! [`report::run_benchmark`] drives both for every backbone in a config file.

pub mod embedding;
pub mod kmeans;
pub mod manifest;
pub mod metrics;
pub mod pca;
pub mod probe;
pub mod report;
pub mod separability;
pub mod synth;

pub use embedding::{read_embeddings, write_embeddings, EmbeddingSet};
pub use manifest::{load_manifest, Label, Split, SplitManifest};
pub use metrics::{metric_bundle, MetricBundle};
pub use probe::{score, train_probe, ProbeConfig, ProbeModel, ScoreSet};
pub use report::{run_benchmark, BenchmarkConfig, BenchmarkReport};
pub use separability::{measure_separability, SeparabilityConfig, SeparabilityReport};
