use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::kmeans;
use crate::manifest::Split;
use crate::metrics::DEFAULT_THRESHOLD;
use crate::probe::ProbeConfig;
use crate::separability::{SeparabilityConfig, MAX_LABELED_CLUSTERS};

/// Benchmark run description, read from TOML.
///
/// ```toml
/// manifest = "manifest.tsv"
/// seed = 42
/// separability_splits = ["A", "C"]
///
/// [probe]
/// epochs = 50
///
/// [[backbone]]
/// name = "arcface"
/// [backbone.embeddings]
/// A = "arcface_A.emb"
/// B = "arcface_B.emb"
/// C = "arcface_C.emb"
/// ```
///
/// Relative paths are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Fixed decision threshold for accuracy, TPR/TNR and HTER.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_separability_splits")]
    pub separability_splits: Vec<Split>,
    #[serde(default = "default_train_split")]
    pub train_split: Split,
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
    #[serde(default = "default_unseen_split")]
    pub unseen_split: Split,
    /// Scale every embedding row to unit L2 norm before any analysis.
    #[serde(default)]
    pub l2_normalize: bool,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default, rename = "backbone")]
    pub backbones: Vec<BackboneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneEntry {
    pub name: String,
    /// EMB1 file per split.
    #[serde(default)]
    pub embeddings: BTreeMap<Split, PathBuf>,
}

fn default_seed() -> u64 {
    kmeans::DEFAULT_SEED
}
fn default_clusters() -> usize {
    2
}
fn default_restarts() -> usize {
    kmeans::DEFAULT_RESTARTS
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_separability_splits() -> Vec<Split> {
    vec![Split::A, Split::C]
}
fn default_train_split() -> Split {
    Split::B
}
fn default_eval_split() -> Split {
    Split::C
}
fn default_unseen_split() -> Split {
    Split::D
}

impl BenchmarkConfig {
    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        let config: Self =
            toml::from_str(text).map_err(|e| ReportError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn separability(&self) -> SeparabilityConfig {
        SeparabilityConfig {
            clusters: self.clusters,
            seed: self.seed,
            restarts: self.restarts,
        }
    }

    fn validate(&self) -> Result<(), ReportError> {
        let invalid = |msg: String| Err(ReportError::InvalidConfig(msg));
        if !(2..=MAX_LABELED_CLUSTERS).contains(&self.clusters) {
            return invalid(format!("clusters must be in 2..={MAX_LABELED_CLUSTERS}, got {}", self.clusters));
        }
        if self.restarts == 0 {
            return invalid("restarts must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return invalid(format!("threshold must be in [0, 1], got {}", self.threshold));
        }
        if !(self.probe.learning_rate.is_finite() && self.probe.learning_rate > 0.0) {
            return invalid(format!("probe learning_rate must be positive, got {}", self.probe.learning_rate));
        }
        for (i, split) in self.separability_splits.iter().enumerate() {
            if self.separability_splits[..i].contains(split) {
                return invalid(format!("split {split} listed twice in separability_splits"));
            }
        }
        if self.train_split == self.eval_split || self.train_split == self.unseen_split {
            return invalid("the probe training split must differ from its evaluation splits".into());
        }
        let mut names: Vec<&str> = Vec::new();
        for entry in &self.backbones {
            let name = entry.name.as_str();
            let ok = !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                && !name.starts_with('.');
            if !ok {
                return invalid(format!(
                    "backbone name {name:?} must be non-empty and use only ASCII letters, digits, '-', '_' or '.'"
                ));
            }
            if names.contains(&name) {
                return invalid(format!("backbone {name:?} declared twice"));
            }
            names.push(name);
        }
        Ok(())
    }
}

pub(super) fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
