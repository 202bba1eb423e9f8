//! Synthetic embeddings and demo datasets.
//!
//! Two reference backbones are provided: a "blob" backbone whose real and fake
//! embeddings are isotropic unit Gaussians centered `separation` standard
//! deviations apart along a random direction, and a "noise" backbone whose
//! embeddings ignore the label entirely.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{write_embeddings, EmbeddingError, EmbeddingSet};
use crate::manifest::{ItemRecord, Label, Split, SplitManifest};

/// `n` labels, half of them fake (the extra one real when `n` is odd), shuffled.
pub fn balanced_labels(n: usize, seed: u64) -> Vec<Label> {
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n / 2 { Label::Fake } else { Label::Real })
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    labels
}

/// Uniformly random unit vector in `dim` dimensions.
pub fn random_direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Row-major embeddings: unit Gaussian noise plus `+-separation/2` along a
/// random direction (plus for fake, minus for real).
pub fn blob_embeddings(labels: &[Label], dim: usize, separation: f64, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = random_direction(dim, &mut rng);
    blob_embeddings_along(labels, &direction, separation, &mut rng)
}

/// Like [`blob_embeddings`] with a given unit `direction`, so that several
/// splits can share one class geometry.
pub fn blob_embeddings_along(
    labels: &[Label],
    direction: &[f64],
    separation: f64,
    rng: &mut impl Rng,
) -> Vec<f32> {
    let half = separation / 2.0;
    let mut data = Vec::with_capacity(labels.len() * direction.len());
    for label in labels {
        let sign = if label.is_fake() { 1.0 } else { -1.0 };
        for d in direction {
            let noise: f64 = rng.sample(StandardNormal);
            data.push((noise + sign * half * d) as f32);
        }
    }
    data
}

/// Row-major unit Gaussian embeddings, independent of any label.
pub fn noise_embeddings(rows: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows * dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect()
}

/// Labeled embedding set with ids `{prefix}{i}`.
pub fn labeled_set(
    backbone: &str,
    prefix: &str,
    data: Vec<f32>,
    labels: Vec<Label>,
    dim: usize,
) -> EmbeddingSet {
    let ids = (0..labels.len()).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingSet::new(backbone, ids, data, dim)
        .and_then(|s| s.with_labels(labels))
        .expect("generated data is finite and well shaped")
}

/// Sizes and seed of a generated demo dataset.
#[derive(Debug, Clone)]
pub struct DemoSpec {
    pub rows: [(Split, usize); 4],
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            rows: [(Split::A, 1000), (Split::B, 600), (Split::C, 400), (Split::D, 200)],
            dim: 64,
            separation: 6.0,
            seed: 7,
        }
    }
}

/// Writes `manifest.tsv`, EMB1 dumps for a separable ("oracle") and a
/// label-blind ("noise") backbone, and a `config.toml` tying them together.
/// Returns the config path.
pub fn write_demo(dir: &Path, spec: &DemoSpec) -> Result<PathBuf, EmbeddingError> {
    let io_err = |path: &Path, source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut items = Vec::new();
    let mut per_split = Vec::new();
    for (k, &(split, rows)) in spec.rows.iter().enumerate() {
        let labels = balanced_labels(rows, spec.seed.wrapping_add(k as u64));
        let prefix = format!("{}-", split.as_str().to_lowercase());
        for (i, &label) in labels.iter().enumerate() {
            let method_tag = match (label, i % 2) {
                (Label::Real, _) => "camera",
                (Label::Fake, 0) => "gan",
                (Label::Fake, _) => "diffusion",
            };
            items.push(ItemRecord {
                id: format!("{prefix}{i}"),
                label,
                method_tag: method_tag.into(),
                split,
            });
        }
        per_split.push((split, prefix, labels));
    }
    let manifest = SplitManifest::new(items, None).expect("generated ids are unique");
    let manifest_path = dir.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest.render()).map_err(|e| io_err(&manifest_path, e))?;

    let mut config = String::from(
        "manifest = \"manifest.tsv\"\nseed = 42\nseparability_splits = [\"A\", \"C\"]\n",
    );
    let direction = random_direction(spec.dim, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    for (b, backbone) in ["oracle", "noise"].iter().enumerate() {
        config.push_str(&format!("\n[[backbone]]\nname = \"{backbone}\"\n[backbone.embeddings]\n"));
        for (split, prefix, labels) in &per_split {
            let seed = spec.seed ^ (((b as u64) << 8) | *split as u64).wrapping_mul(0x9e37_79b9);
            let data = if *backbone == "oracle" {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                blob_embeddings_along(labels, &direction, spec.separation, &mut rng)
            } else {
                noise_embeddings(labels.len(), spec.dim, seed)
            };
            let set = labeled_set(backbone, prefix, data, labels.clone(), spec.dim);
            let file = format!("{backbone}_{split}.emb");
            write_embeddings(&set, dir.join(&file))?;
            config.push_str(&format!("{split} = \"{file}\"\n"));
        }
    }
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, config).map_err(|e| io_err(&config_path, e))?;
    Ok(config_path)
}
