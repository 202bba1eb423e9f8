//! Benchmark runner and report generation.
//!
//! For every configured backbone: measure separability on the configured
//! splits, train a linear probe on the training split, and score the seen and
//! unseen evaluation splits. A failure in one backbone is recorded in its row
//! and never touches the others. Rows are sorted by backbone name, and every
//! output is a deterministic function of the config and the input files.

mod config;
mod markdown;
mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BackboneEntry, BenchmarkConfig};
pub use markdown::render_markdown;
pub use svg::render_svg;

use crate::embedding::{join_labels, read_embeddings, EmbeddingSet};
use crate::manifest::{load_manifest, ManifestError, Split, SplitManifest};
use crate::metrics::{metric_bundle, threshold_metrics, MetricBundle, ThresholdMetrics};
use crate::probe::{score, train_probe, ProbeModel};
use crate::separability::{measure_separability, SeparabilityReport};

/// Environment variable capping the backbone worker pool.
pub const THREADS_ENV: &str = "SEPBENCH_THREADS";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot plot an empty sample")]
    EmptySample,
    #[error("worker pool: {0}")]
    ThreadPool(String),
}

/// Conventions behind the reported numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Methodology {
    pub positive_class: String,
    pub decision_rule: String,
    pub eer_estimator: String,
    pub reduction: String,
    pub clustering: String,
    pub cluster_labeling: String,
    pub probe: String,
}

impl Default for Methodology {
    fn default() -> Self {
        Self {
            positive_class: "fake (label 1)".into(),
            decision_rule: "predict fake iff score >= threshold".into(),
            eer_estimator: "linear interpolation between the ROC points bracketing FPR = FNR".into(),
            reduction: "PCA to 2D via SVD of the mean-centered data, refit per measured split; variance uses N - 1".into(),
            clustering: "K-means (Lloyd) from k-means++ seeding, best inertia over restarts; stop at relative inertia change < 1e-6 or 300 iterations".into(),
            cluster_labeling: "clusters mapped to labels maximizing accuracy (both bijections for n = 2)".into(),
            probe: "affine + sigmoid on standardized features, full-batch gradient descent on mean BCE, checkpoint with lowest training EER".into(),
        }
    }
}

/// Identity of one input file, for reproducing a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputProvenance {
    pub path: PathBuf,
    pub rows: usize,
    pub dim: usize,
    pub payload_crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub train_split: Split,
    pub train_rows: usize,
    pub model: ProbeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneRow {
    pub backbone_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub inputs: BTreeMap<Split, InputProvenance>,
    pub separability: BTreeMap<Split, SeparabilityReport>,
    pub probe: Option<ProbeSummary>,
    /// Probe metrics on the seen (and, when configured, unseen) evaluation splits.
    pub evaluation: BTreeMap<Split, MetricBundle>,
    /// Unseen-split rates at the EER threshold calibrated on the seen evaluation split.
    pub threshold_transfer: Option<ThresholdMetrics>,
}

impl BackboneRow {
    fn failed(name: &str, error: String) -> Self {
        Self {
            backbone_name: name.to_string(),
            error: Some(error),
            inputs: BTreeMap::new(),
            separability: BTreeMap::new(),
            probe: None,
            evaluation: BTreeMap::new(),
            threshold_transfer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub toolkit_version: String,
    pub methodology: Methodology,
    pub config: BenchmarkConfig,
    pub manifest_warnings: Vec<String>,
    pub rows: Vec<BackboneRow>,
}

impl BenchmarkReport {
    pub fn new(config: BenchmarkConfig, manifest_warnings: Vec<String>, mut rows: Vec<BackboneRow>) -> Self {
        rows.sort_by(|a, b| a.backbone_name.cmp(&b.backbone_name));
        Self {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            methodology: Methodology::default(),
            config,
            manifest_warnings,
            rows,
        }
    }

    /// True when there is at least one row and every row failed.
    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.error.is_some())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }
}

/// A generated output file, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

/// Runs every backbone of `config` without touching the filesystem beyond reading inputs.
pub fn execute(
    config: &BenchmarkConfig,
    base_dir: &Path,
) -> Result<(BenchmarkReport, Vec<Artifact>), ReportError> {
    let manifest = load_manifest(config::resolve(base_dir, &config.manifest))?;
    let pool = worker_pool()?;
    let results: Vec<(BackboneRow, Vec<Artifact>)> = pool.install(|| {
        config
            .backbones
            .par_iter()
            .map(|entry| match run_backbone(entry, config, base_dir, &manifest) {
                Ok(done) => done,
                Err(error) => {
                    log::error!("backbone {}: {error}", entry.name);
                    (BackboneRow::failed(&entry.name, error), Vec::new())
                }
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut artifacts = Vec::new();
    for (row, files) in results {
        rows.push(row);
        artifacts.extend(files);
    }
    artifacts.sort_by(|a, b| a.file_name.cmp(&b.file_name));
    let report = BenchmarkReport::new(config.clone(), manifest.imbalance_warnings(), rows);
    Ok((report, artifacts))
}

/// Loads `config_path`, runs the benchmark and writes `report.json`,
/// `report.md`, one SVG per measured split and one score TSV per scored split
/// into `out_dir`.
pub fn run_benchmark(config_path: &Path, out_dir: &Path) -> Result<BenchmarkReport, ReportError> {
    let config = BenchmarkConfig::load(config_path)?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let (report, artifacts) = execute(&config, base_dir)?;

    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, contents: &str| {
        let path = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|source| ReportError::Io { path, source })
    };
    write("report.json", &report.to_json()?)?;
    write("report.md", &render_markdown(&report))?;
    for artifact in &artifacts {
        write(&artifact.file_name, &artifact.contents)?;
    }
    Ok(report)
}

fn worker_pool() -> Result<rayon::ThreadPool, ReportError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => log::warn!("ignoring {THREADS_ENV}={raw:?}: expected a positive integer"),
        }
    }
    builder
        .build()
        .map_err(|e| ReportError::ThreadPool(e.to_string()))
}

fn run_backbone(
    entry: &BackboneEntry,
    config: &BenchmarkConfig,
    base_dir: &Path,
    manifest: &SplitManifest,
) -> Result<(BackboneRow, Vec<Artifact>), String> {
    let name = entry.name.as_str();
    let mut needed: Vec<Split> = config.separability_splits.clone();
    let probe_wanted = entry.embeddings.contains_key(&config.train_split);
    if probe_wanted {
        needed.extend([config.train_split, config.eval_split]);
        if entry.embeddings.contains_key(&config.unseen_split) {
            needed.push(config.unseen_split);
        }
    }
    needed.sort();
    needed.dedup();

    let mut inputs = BTreeMap::new();
    let mut sets: BTreeMap<Split, EmbeddingSet> = BTreeMap::new();
    for split in needed {
        let declared = entry
            .embeddings
            .get(&split)
            .ok_or_else(|| format!("no embeddings declared for split {split}"))?;
        manifest.require_split(split).map_err(|e| e.to_string())?;
        let path = config::resolve(base_dir, declared);
        let raw = read_embeddings(&path).map_err(|e| format!("split {split}: {e}"))?;
        if raw.backbone_name() != name {
            log::warn!(
                "{}: backbone name {:?} differs from config entry {name:?}",
                path.display(),
                raw.backbone_name()
            );
        }
        let mut set = join_labels(&raw, manifest, split).map_err(|e| format!("split {split}: {e}"))?;
        if config.l2_normalize {
            set = set.l2_normalized();
        }
        inputs.insert(
            split,
            InputProvenance {
                path: declared.clone(),
                rows: set.rows(),
                dim: set.dim(),
                payload_crc32: set.payload_crc32(),
            },
        );
        sets.insert(split, set);
    }

    let mut artifacts = Vec::new();
    let mut separability = BTreeMap::new();
    for &split in &config.separability_splits {
        let report = measure_separability(&sets[&split], &config.separability())
            .map_err(|e| format!("separability on split {split}: {e}"))?;
        let title = format!(
            "{name}, split {split}: separability accuracy {:.4}",
            report.accuracy
        );
        let svg = render_svg(&report.viz_sample, &title).map_err(|e| e.to_string())?;
        artifacts.push(Artifact {
            file_name: format!("{name}_{split}.svg"),
            contents: svg,
        });
        separability.insert(split, report);
    }

    let mut probe = None;
    let mut evaluation: BTreeMap<Split, MetricBundle> = BTreeMap::new();
    let mut threshold_transfer = None;
    if probe_wanted {
        let train = &sets[&config.train_split];
        let model = train_probe(train, &config.probe)
            .map_err(|e| format!("probe training on split {}: {e}", config.train_split))?;
        for split in [config.eval_split, config.unseen_split] {
            let Some(set) = sets.get(&split) else { continue };
            let scores = score(&model, set).map_err(|e| format!("scoring split {split}: {e}"))?;
            let bundle = metric_bundle(&scores, Some(manifest), config.threshold)
                .map_err(|e| format!("metrics on split {split}: {e}"))?;
            artifacts.push(Artifact {
                file_name: format!("{name}_scores_{split}.tsv"),
                contents: scores.to_tsv(),
            });
            if split == config.unseen_split {
                if let Some(seen) = evaluation.get(&config.eval_split) {
                    threshold_transfer = Some(
                        threshold_metrics(&scores, seen.eer_threshold)
                            .map_err(|e| format!("metrics on split {split}: {e}"))?,
                    );
                }
            }
            evaluation.insert(split, bundle);
        }
        probe = Some(ProbeSummary {
            train_split: config.train_split,
            train_rows: train.rows(),
            model,
        });
    }

    Ok((
        BackboneRow {
            backbone_name: name.to_string(),
            error: None,
            inputs,
            separability,
            probe,
            evaluation,
            threshold_transfer,
        },
        artifacts,
    ))
}
