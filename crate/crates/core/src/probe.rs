//! Linear probe on frozen embeddings.
//!
//! A single affine layer with a sigmoid output is trained by full-batch
//! gradient descent on the mean binary cross-entropy. Features are
//! standardized per dimension with training-set statistics, which the model
//! keeps for scoring. After every epoch the training-set EER is measured and
//! the epoch with the lowest EER (earliest on ties) is the one returned.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingSet;
use crate::manifest::Label;
use crate::metrics::{self, MetricsError};

pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("training set carries no labels")]
    Unlabeled,
    #[error("training needs both classes ({real} real, {fake} fake)")]
    SingleClass { real: usize, fake: usize },
    #[error("training needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("epoch count must be at least 1")]
    NoEpochs,
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("dimension mismatch: model expects {expected}, set has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid score set: {0}")]
    InvalidScores(String),
    #[error("score file line {line}: {message}")]
    ScoreParse { line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightInit {
    Zeros,
    /// Gaussian weights with the given standard deviation, drawn from the config seed.
    Normal { std_dev: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: WeightInit,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: crate::kmeans::DEFAULT_SEED,
            init: WeightInit::Zeros,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    /// Weights over standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub trained_epochs: usize,
    pub selected_epoch: usize,
    pub selected_train_eer: f64,
    /// Mean cross-entropy before training (index 0) and after each epoch.
    pub loss_history: Vec<f64>,
    pub training_config: ProbeConfig,
}

impl ProbeModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Logit for one raw (unstandardized) embedding row.
    pub fn logit(&self, row: &[f32]) -> f64 {
        let mut z = self.bias;
        for (((&x, w), m), s) in row
            .iter()
            .zip(&self.weights)
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
        {
            z += w * ((f64::from(x) - m) / s);
        }
        z
    }
}

/// Per-item classifier outputs; higher means more likely fake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub labels: Option<Vec<Label>>,
}

impl ScoreSet {
    pub fn new(
        ids: Vec<String>,
        scores: Vec<f64>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self, ProbeError> {
        if ids.len() != scores.len() || labels.as_ref().is_some_and(|l| l.len() != ids.len()) {
            return Err(ProbeError::InvalidScores(format!(
                "{} ids, {} scores, {} labels",
                ids.len(),
                scores.len(),
                labels.as_ref().map_or(0, Vec::len)
            )));
        }
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(ProbeError::InvalidScores(format!(
                "score {} at row {i} is outside [0, 1]",
                scores[i]
            )));
        }
        Ok(Self { ids, scores, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `id<TAB>score<TAB>label` lines; the label column is `-` when unknown.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 32);
        for (i, (id, score)) in self.ids.iter().zip(&self.scores).enumerate() {
            let label = self
                .labels
                .as_ref()
                .map_or_else(|| "-".to_string(), |l| l[i].to_string());
            writeln!(out, "{id}\t{score}\t{label}").expect("writing to a String");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, ProbeError> {
        let (mut ids, mut scores, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        let mut any_missing = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let err = |message: String| ProbeError::ScoreParse { line, message };
            if fields.len() != 3 {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            ids.push(fields[0].to_string());
            scores.push(
                fields[1]
                    .parse::<f64>()
                    .map_err(|e| err(format!("invalid score {:?}: {e}", fields[1])))?,
            );
            match fields[2] {
                "-" => any_missing = true,
                other => labels.push(other.parse::<Label>().map_err(|e| err(e.to_string()))?),
            }
        }
        if any_missing && !labels.is_empty() {
            return Err(ProbeError::InvalidScores("labels present on only some rows".into()));
        }
        let labels = (!any_missing).then_some(labels);
        Self::new(ids, scores, labels)
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), ProbeError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|source| ProbeError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self, ProbeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProbeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_tsv(&text)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Standardized training features, row-major.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub features: Vec<f64>,
    pub rows: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Per-dimension standardization with population statistics; constant dimensions get scale 1.
pub fn standardize(set: &EmbeddingSet) -> Standardized {
    let (rows, dim) = (set.rows(), set.dim());
    let n = rows as f64;
    let mut mean = vec![0.0; dim];
    for i in 0..rows {
        for (m, &x) in mean.iter_mut().zip(set.row(i)) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for i in 0..rows {
        for ((v, &x), m) in var.iter_mut().zip(set.row(i)).zip(&mean) {
            let d = f64::from(x) - m;
            *v += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut features = Vec::with_capacity(rows * dim);
    for i in 0..rows {
        for ((&x, m), s) in set.row(i).iter().zip(&mean).zip(&scale) {
            features.push((f64::from(x) - m) / s);
        }
    }
    Standardized {
        features,
        rows,
        dim,
        mean,
        scale,
    }
}

/// Mean binary cross-entropy and its gradient with respect to (weights, bias).
///
/// `features` is row-major with `weights.len()` columns; `targets` are 0 or 1.
pub fn loss_and_gradient(
    features: &[f64],
    targets: &[f64],
    weights: &[f64],
    bias: f64,
) -> (f64, Vec<f64>, f64) {
    let dim = weights.len();
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; dim];
    let mut grad_b = 0.0;
    for (row, &y) in features.chunks_exact(dim).zip(targets) {
        let z = bias + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>();
        loss += softplus(z) - y * z;
        let residual = sigmoid(z) - y;
        grad_b += residual;
        for (g, x) in grad_w.iter_mut().zip(row) {
            *g += residual * x;
        }
    }
    grad_w.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad_w, grad_b / n)
}

pub fn train_probe(train: &EmbeddingSet, config: &ProbeConfig) -> Result<ProbeModel, ProbeError> {
    let labels = train.labels().ok_or(ProbeError::Unlabeled)?;
    if train.rows() < 2 {
        return Err(ProbeError::TooFewRows(train.rows()));
    }
    let fake = labels.iter().filter(|l| l.is_fake()).count();
    if fake == 0 || fake == labels.len() {
        return Err(ProbeError::SingleClass {
            real: labels.len() - fake,
            fake,
        });
    }
    if config.epochs == 0 {
        return Err(ProbeError::NoEpochs);
    }

    let std = standardize(train);
    let targets: Vec<f64> = labels.iter().map(|l| f64::from(l.as_u8())).collect();
    let mut weights = match config.init {
        WeightInit::Zeros => vec![0.0; std.dim],
        WeightInit::Normal { std_dev } => {
            let normal = Normal::new(0.0, std_dev)
                .map_err(|e| ProbeError::InvalidScores(format!("bad init std_dev: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..std.dim).map(|_| normal.sample(&mut rng)).collect()
        }
    };
    let mut bias = 0.0;

    let (initial_loss, mut grad_w, mut grad_b) =
        loss_and_gradient(&std.features, &targets, &weights, bias);
    let mut loss_history = vec![initial_loss];
    let mut best: Option<(f64, usize, Vec<f64>, f64)> = None;

    for epoch in 1..=config.epochs {
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * grad_b;

        let (loss, gw, gb) = loss_and_gradient(&std.features, &targets, &weights, bias);
        if !loss.is_finite() || !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(ProbeError::Diverged { epoch });
        }
        loss_history.push(loss);
        (grad_w, grad_b) = (gw, gb);

        let scores: Vec<f64> = std
            .features
            .chunks_exact(std.dim)
            .map(|row| sigmoid(bias + row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>()))
            .collect();
        let eer = metrics::eer(&metrics::roc_curve(&scores, labels)?).eer;
        if best.as_ref().is_none_or(|b| eer < b.0) {
            best = Some((eer, epoch, weights.clone(), bias));
        }
    }

    let (selected_train_eer, selected_epoch, weights, bias) = best.expect("epochs >= 1");
    Ok(ProbeModel {
        weights,
        bias,
        feature_mean: std.mean,
        feature_scale: std.scale,
        trained_epochs: config.epochs,
        selected_epoch,
        selected_train_eer,
        loss_history,
        training_config: config.clone(),
    })
}

/// Sigmoid scores for every row; labels are carried over when present.
pub fn score(model: &ProbeModel, set: &EmbeddingSet) -> Result<ScoreSet, ProbeError> {
    if set.dim() != model.dim() {
        return Err(ProbeError::DimensionMismatch {
            expected: model.dim(),
            actual: set.dim(),
        });
    }
    let scores = (0..set.rows()).map(|i| sigmoid(model.logit(set.row(i)))).collect();
    ScoreSet::new(set.ids().to_vec(), scores, set.labels().map(<[Label]>::to_vec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(rows: &[(f32, Label)]) -> EmbeddingSet {
        EmbeddingSet::new(
            "t",
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            rows.iter().map(|r| r.0).collect(),
            1,
        )
        .unwrap()
        .with_labels(rows.iter().map(|r| r.1).collect())
        .unwrap()
    }

    #[test]
    fn separable_one_dimensional_data() {
        let set = labeled(&[
            (-1.0, Label::Real),
            (-1.0, Label::Real),
            (1.0, Label::Fake),
            (1.0, Label::Fake),
        ]);
        let model = train_probe(&set, &ProbeConfig::default()).unwrap();
        assert_eq!(model.selected_train_eer, 0.0);
        assert_eq!(model.selected_epoch, 1);
        assert_eq!(model.trained_epochs, 50);
        let scores = score(&model, &set).unwrap();
        assert_eq!(metrics::eer(&metrics::roc(&scores).unwrap()).eer, 0.0);
        assert!(model.weights[0] > 0.0);
    }

    #[test]
    fn zero_model_scores_one_half() {
        let set = labeled(&[(3.0, Label::Real), (-7.0, Label::Fake)]);
        let model = ProbeModel {
            weights: vec![0.0],
            bias: 0.0,
            feature_mean: vec![0.0],
            feature_scale: vec![1.0],
            trained_epochs: 0,
            selected_epoch: 0,
            selected_train_eer: 0.5,
            loss_history: vec![],
            training_config: ProbeConfig::default(),
        };
        let s = score(&model, &set).unwrap();
        assert_eq!(s.scores, vec![0.5, 0.5]);
        assert_eq!(s.labels.unwrap(), vec![Label::Real, Label::Fake]);
    }

    #[test]
    fn sigmoid_is_monotone_and_stable() {
        assert!(sigmoid(2.0) > sigmoid(1.0));
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((softplus(-1000.0)).abs() < 1e-300);
        assert_eq!(softplus(1000.0), 1000.0);
    }

    #[test]
    fn training_errors() {
        let one_class = labeled(&[(1.0, Label::Fake), (2.0, Label::Fake)]);
        assert!(matches!(
            train_probe(&one_class, &ProbeConfig::default()),
            Err(ProbeError::SingleClass { real: 0, fake: 2 })
        ));
        let unlabeled = EmbeddingSet::new("t", vec!["a".into(), "b".into()], vec![0.0, 1.0], 1).unwrap();
        assert!(matches!(
            train_probe(&unlabeled, &ProbeConfig::default()),
            Err(ProbeError::Unlabeled)
        ));
        let set = labeled(&[(-1.0, Label::Real), (1.0, Label::Real), (1.0, Label::Fake)]);
        let config = ProbeConfig { learning_rate: f64::INFINITY, ..ProbeConfig::default() };
        assert!(matches!(train_probe(&set, &config), Err(ProbeError::Diverged { epoch: 1 })));
        let config = ProbeConfig { epochs: 0, ..ProbeConfig::default() };
        assert!(matches!(train_probe(&set, &config), Err(ProbeError::NoEpochs)));
    }

    #[test]
    fn scoring_dimension_mismatch() {
        let set = labeled(&[(-1.0, Label::Real), (1.0, Label::Fake)]);
        let model = train_probe(&set, &ProbeConfig::default()).unwrap();
        let wide = EmbeddingSet::new("t", vec!["a".into()], vec![0.0, 1.0], 2).unwrap();
        assert!(matches!(
            score(&model, &wide),
            Err(ProbeError::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn constant_feature_gets_unit_scale() {
        let set = EmbeddingSet::new(
            "t",
            vec!["a".into(), "b".into()],
            vec![5.0, 1.0, 5.0, 3.0],
            2,
        )
        .unwrap();
        let s = standardize(&set);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.features, vec![0.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn score_tsv_round_trip() {
        let s = ScoreSet::new(
            vec!["a".into(), "b".into()],
            vec![0.125, 0.9999999999],
            Some(vec![Label::Real, Label::Fake]),
        )
        .unwrap();
        assert_eq!(s.to_tsv(), "a\t0.125\t0\nb\t0.9999999999\t1\n");
        assert_eq!(ScoreSet::from_tsv(&s.to_tsv()).unwrap(), s);
        let unlabeled = ScoreSet::from_tsv("a\t0.5\t-\n").unwrap();
        assert!(unlabeled.labels.is_none());
        assert!(ScoreSet::from_tsv("a\t0.5\t-\nb\t0.1\t1\n").is_err());
        assert!(ScoreSet::from_tsv("a\t1.5\t1\n").is_err());
        assert!(ScoreSet::from_tsv("a\t0.5\n").is_err());
    }
}
