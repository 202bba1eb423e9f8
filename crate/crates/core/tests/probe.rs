mod common;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sepbench::metrics::{eer, roc_curve};
use sepbench::probe::{loss_and_gradient, standardize, ProbeModel};
use sepbench::synth::{balanced_labels, blob_embeddings, labeled_set, noise_embeddings};
use sepbench::{score, train_probe, EmbeddingSet, Label, ProbeConfig};

use common::{max_gradient_error, mean_bce};

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rows = rng.random_range(5..60);
        let dim = rng.random_range(1..12);
        let features: Vec<f64> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
        let targets: Vec<f64> = (0..rows).map(|_| f64::from(rng.random::<bool>() as u8)).collect();
        let weights: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect();
        let bias: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;

        let (loss, grad_w, grad_b) = loss_and_gradient(&features, &targets, &weights, bias);
        let direct = mean_bce(&features, &targets, &weights, bias);
        assert!((loss - direct).abs() < 1e-10 * direct);
        worst = worst.max(max_gradient_error(&features, &targets, &weights, bias, &grad_w, grad_b, eps));
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

fn noise_set(seed: u64, rows: usize, dim: usize) -> EmbeddingSet {
    let labels = balanced_labels(rows, seed);
    labeled_set("noise", "n", noise_embeddings(rows, dim, seed ^ 0xabc), labels, dim)
}

#[test]
fn random_labels_keep_training_eer_near_chance() {
    for seed in 0..10 {
        let model = train_probe(&noise_set(seed, 2000, 16), &ProbeConfig::default()).unwrap();
        assert!(
            (0.40..=0.60).contains(&model.selected_train_eer),
            "seed {seed}: {}",
            model.selected_train_eer
        );
        assert!(model.selected_epoch >= 1 && model.selected_epoch <= model.trained_epochs);
    }
}

#[test]
fn loss_never_increases_at_default_rate() {
    for seed in 0..5 {
        let labels = balanced_labels(800, seed);
        let data = blob_embeddings(&labels, 32, 1.5, seed);
        let set = labeled_set("b", "x", data, labels, 32);
        let model = train_probe(&set, &ProbeConfig::default()).unwrap();
        assert_eq!(model.loss_history.len(), 51);
        for w in model.loss_history.windows(2) {
            assert!(w[1] <= w[0], "loss rose from {} to {}", w[0], w[1]);
        }
    }
}

#[test]
fn row_order_does_not_change_the_model() {
    let set = noise_set(3, 300, 8);
    let mut order: Vec<usize> = (0..set.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let shuffled = set.select_rows(&order);
    let a = train_probe(&set, &ProbeConfig::default()).unwrap();
    let b = train_probe(&shuffled, &ProbeConfig::default()).unwrap();
    assert_eq!(a.selected_epoch, b.selected_epoch);
    for (x, y) in a.weights.iter().zip(&b.weights) {
        assert!((x - y).abs() < 1e-9);
    }
    assert!((a.bias - b.bias).abs() < 1e-9);
}

#[test]
fn rescaled_embeddings_give_the_same_training_roc() {
    let labels = balanced_labels(400, 5);
    let data = blob_embeddings(&labels, 10, 1.0, 5);
    let scaled: Vec<f32> = data.iter().map(|x| x * 4.0).collect();
    let a_set = labeled_set("b", "x", data, labels.clone(), 10);
    let b_set = labeled_set("b", "x", scaled, labels.clone(), 10);
    let a = train_probe(&a_set, &ProbeConfig::default()).unwrap();
    let b = train_probe(&b_set, &ProbeConfig::default()).unwrap();
    assert_eq!(a.selected_epoch, b.selected_epoch);
    let roc_a = roc_curve(&score(&a, &a_set).unwrap().scores, &labels).unwrap();
    let roc_b = roc_curve(&score(&b, &b_set).unwrap().scores, &labels).unwrap();
    let rates = |r: &sepbench::metrics::RocCurve| r.points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>();
    assert_eq!(rates(&roc_a), rates(&roc_b));
    assert_eq!(eer(&roc_a).eer, a.selected_train_eer);
}

fn naive_scores(model: &ProbeModel, set: &EmbeddingSet) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..set.rows() {
        let row = set.row(i);
        let mut z = model.bias;
        for (j, &x) in row.iter().enumerate() {
            z += model.weights[j] * (f64::from(x) - model.feature_mean[j]) / model.feature_scale[j];
        }
        out.push(1.0 / (1.0 + (-z).exp()));
    }
    out
}

#[test]
fn scores_match_scalar_loop() {
    let labels = balanced_labels(500, 6);
    let train = labeled_set("b", "t", blob_embeddings(&labels, 24, 2.0, 6), labels, 24);
    let model = train_probe(&train, &ProbeConfig::default()).unwrap();
    let labels = balanced_labels(300, 7);
    let eval = labeled_set("b", "e", blob_embeddings(&labels, 24, 2.0, 7), labels, 24);
    let got = score(&model, &eval).unwrap();
    for (g, w) in got.scores.iter().zip(naive_scores(&model, &eval)) {
        assert!((g - w).abs() <= 1e-6);
    }
    assert_eq!(got.labels.as_deref(), eval.labels());
}

#[test]
fn standardized_features_have_zero_mean_unit_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dim = 6;
    let rows = 200;
    let mut data: Vec<f32> = (0..rows * dim).map(|_| rng.random_range(-3.0..7.0)).collect();
    for r in 0..rows {
        data[r * dim + 2] = 1.5; // constant column
    }
    let set = labeled_set("b", "x", data, balanced_labels(rows, 1), dim);
    let s = standardize(&set);
    for j in 0..dim {
        let col: Vec<f64> = (0..rows).map(|i| s.features[i * dim + j]).collect();
        let mean = col.iter().sum::<f64>() / rows as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / rows as f64;
        assert!(mean.abs() < 1e-12);
        if j == 2 {
            assert_eq!(s.scale[j], 1.0);
            assert_eq!(var, 0.0);
        } else {
            assert!((var - 1.0).abs() < 1e-12);
        }
    }
    assert!(set.labels().unwrap().contains(&Label::Fake));
}
