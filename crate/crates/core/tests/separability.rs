use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepbench::pca::ReducedEmbeddings;
use sepbench::separability::{assign_clusters_to_labels, sample_for_viz, VIZ_SAMPLE_SIZE};
use sepbench::synth::{balanced_labels, blob_embeddings, labeled_set, noise_embeddings};
use sepbench::{measure_separability, EmbeddingSet, Label, SeparabilityConfig};

fn blobs(per_class: usize, dim: usize, separation: f64, seed: u64) -> EmbeddingSet {
    let labels = balanced_labels(2 * per_class, seed);
    labeled_set("blob", "b", blob_embeddings(&labels, dim, separation, seed), labels, dim)
}

fn config(seed: u64) -> SeparabilityConfig {
    SeparabilityConfig { seed, ..SeparabilityConfig::default() }
}

#[test]
fn separated_blobs_are_found() {
    let set = blobs(1000, 512, 6.0, 1);
    // the generator itself: nearest true class mean classifies almost everything
    let labels = set.labels().unwrap();
    let dim = set.dim();
    let mut means = [vec![0.0f64; dim], vec![0.0f64; dim]];
    for (i, l) in labels.iter().enumerate() {
        for (m, x) in means[l.as_u8() as usize].iter_mut().zip(set.row(i)) {
            *m += f64::from(*x) / 1000.0;
        }
    }
    let correct = (0..set.rows())
        .filter(|&i| {
            let d = |m: &[f64]| m.iter().zip(set.row(i)).map(|(a, b)| (a - f64::from(*b)).powi(2)).sum::<f64>();
            (d(&means[1]) < d(&means[0])) == labels[i].is_fake()
        })
        .count();
    assert!(correct as f64 / 2000.0 >= 0.999);

    let report = measure_separability(&set, &config(42)).unwrap();
    assert!(report.accuracy >= 0.99, "accuracy {}", report.accuracy);
    assert_eq!(report.viz_sample.len(), VIZ_SAMPLE_SIZE);
}

#[test]
fn random_labels_give_chance_accuracy() {
    for seed in 0..3 {
        let labels = balanced_labels(20_000, seed);
        let set = labeled_set("noise", "n", noise_embeddings(20_000, 128, seed + 100), labels, 128);
        let acc = measure_separability(&set, &config(seed)).unwrap().accuracy;
        assert!((0.48..=0.52).contains(&acc), "seed {seed}: {acc}");
    }
}

#[test]
fn flipping_labels_toggles_reversed() {
    for seed in 0..5 {
        let set = blobs(150, 8, 2.0, seed);
        let flipped_labels: Vec<Label> = set.labels().unwrap().iter().map(|l| l.flipped()).collect();
        let flipped = set.clone().with_labels(flipped_labels).unwrap();
        let a = measure_separability(&set, &config(seed)).unwrap();
        let b = measure_separability(&flipped, &config(seed)).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
        assert_ne!(a.reversed, b.reversed);
        assert_eq!((a.tpr, a.tnr), (b.tnr, b.tpr));
    }
}

#[test]
fn row_order_does_not_matter() {
    let set = blobs(300, 16, 5.0, 4);
    let mut order: Vec<usize> = (0..set.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let a = measure_separability(&set, &config(42)).unwrap();
    let b = measure_separability(&set.select_rows(&order), &config(42)).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn accuracy_grows_with_separation() {
    let steps: Vec<f64> = (0..10).map(|k| 6.0 * k as f64 / 9.0).collect();
    let accuracy: Vec<f64> = steps
        .iter()
        .map(|&sep| {
            (0..5)
                .map(|seed| measure_separability(&blobs(300, 32, sep, seed), &config(seed)).unwrap().accuracy)
                .sum::<f64>()
                / 5.0
        })
        .collect();
    let rho = pearson(&ranks(&steps), &ranks(&accuracy));
    assert!(rho > 0.9, "spearman {rho}, accuracies {accuracy:?}");
}

#[test]
fn provenance_reproduces_the_result() {
    let set = blobs(200, 12, 3.0, 9);
    let first = measure_separability(&set, &SeparabilityConfig { clusters: 3, seed: 5, restarts: 4 }).unwrap();
    let p = &first.provenance;
    assert_eq!(p.payload_crc32, set.payload_crc32());
    let again = measure_separability(
        &set,
        &SeparabilityConfig { clusters: p.clusters, seed: p.seed, restarts: p.restarts },
    )
    .unwrap();
    assert_eq!(first, again);
    assert_eq!(first.accuracy.to_bits(), again.accuracy.to_bits());
}

#[test]
fn hand_counted_assignments() {
    let l = |bits: &[u8]| bits.iter().map(|&b| if b == 1 { Label::Fake } else { Label::Real }).collect::<Vec<_>>();
    let a = assign_clusters_to_labels(&[0, 0, 1, 1], &l(&[1, 1, 0, 0]), 2).unwrap();
    assert_eq!((a.accuracy, a.reversed), (1.0, true));
    let b = assign_clusters_to_labels(&[0, 1, 0, 1, 0], &l(&[0, 0, 0, 1, 1]), 2).unwrap();
    assert_eq!((b.accuracy, b.reversed), (0.6, false));
    assert_eq!(b.cluster_to_label, vec![Label::Real, Label::Fake]);
}

fn reduced(n: usize, rng: &mut ChaCha8Rng) -> (ReducedEmbeddings, Vec<usize>, Vec<Label>) {
    let points: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    let assignments: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let labels: Vec<Label> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.3 { Label::Fake } else { Label::Real })
        .collect();
    let ids = (0..n).map(|i| i.to_string()).collect();
    (ReducedEmbeddings { points, ids, labels: Some(labels.clone()) }, assignments, labels)
}

#[test]
fn viz_sample_sizes_and_alignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (pts, asg, lab) = reduced(10, &mut rng);
    let all = sample_for_viz(&pts, &asg, &lab, 1);
    assert_eq!(all.len(), 10);
    for (i, v) in all.iter().enumerate() {
        assert_eq!(([v.x, v.y], v.cluster, v.label), (pts.points[i], asg[i], lab[i]));
    }

    let (pts, asg, lab) = reduced(5000, &mut rng);
    let a = sample_for_viz(&pts, &asg, &lab, 1);
    let b = sample_for_viz(&pts, &asg, &lab, 2);
    assert_eq!((a.len(), b.len()), (1000, 1000));
    assert_ne!(a, b);
    assert_eq!(a, sample_for_viz(&pts, &asg, &lab, 1));
    for v in &a {
        let i = pts.points.iter().position(|p| *p == [v.x, v.y]).unwrap();
        assert_eq!((v.cluster, v.label), (asg[i], lab[i]));
    }
}

#[test]
fn viz_label_proportions_track_the_full_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (pts, asg, lab) = reduced(5000, &mut rng);
    let p = lab.iter().filter(|l| l.is_fake()).count() as f64 / 5000.0;
    // finite-population standard error of a 1000-of-5000 sample
    let se = (p * (1.0 - p) / 1000.0 * (4000.0 / 4999.0)).sqrt();
    for seed in 0..100 {
        let s = sample_for_viz(&pts, &asg, &lab, seed);
        let q = s.iter().filter(|v| v.label.is_fake()).count() as f64 / s.len() as f64;
        assert!((q - p).abs() <= 4.0 * se, "seed {seed}: {q} vs {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]
    #[test]
    fn two_cluster_accuracy_is_at_least_half(
        rows in prop::collection::vec((0usize..2, any::<bool>()), 2..80)
    ) {
        let assignments: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<Label> = rows.iter().map(|r| if r.1 { Label::Fake } else { Label::Real }).collect();
        prop_assume!(labels.contains(&Label::Fake) && labels.contains(&Label::Real));
        let a = assign_clusters_to_labels(&assignments, &labels, 2).unwrap();
        prop_assert!(a.accuracy >= 0.5);
        let identity = assignments.iter().zip(&labels).filter(|(c, l)| **c == l.as_u8() as usize).count() as f64
            / labels.len() as f64;
        prop_assert!((a.accuracy - identity.max(1.0 - identity)).abs() < 1e-12);
    }
}
