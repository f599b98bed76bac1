mod oracles;

use mmnas_core::data::{Label, TaskKind};
use mmnas_core::metrics::{aupr, auroc, recall_at_k, top_k, Metrics};
use mmnas_core::CoreError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use oracles::*;

#[test]
fn auroc_examples() {
    assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
    assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    assert_eq!(auroc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
}

#[test]
fn auroc_requires_both_classes() {
    assert!(matches!(auroc(&[0.2, 0.4], &[true, true]), Err(CoreError::UndefinedMetric(_))));
    assert!(matches!(auroc(&[0.2, 0.4], &[false, false]), Err(CoreError::UndefinedMetric(_))));
    assert!(matches!(auroc(&[0.2], &[true, false]), Err(CoreError::Dimension(_))));
}

#[test]
fn aupr_examples() {
    assert_eq!(aupr(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
    for n in 1..12 {
        let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let mut labels = vec![false; n];
        labels[n - 1] = true;
        assert!((aupr(&scores, &labels).unwrap() - 1.0 / n as f64).abs() < 1e-15);
    }
    assert!(matches!(aupr(&[0.5, 0.2], &[false, false]), Err(CoreError::UndefinedMetric(_))));
}

#[test]
fn recall_examples() {
    let scores = vec![vec![0.1, 0.5, 0.4, 0.0]];
    assert_eq!(recall_at_k(&scores, &[vec![1, 2]], 2).unwrap(), 1.0);
    assert_eq!(recall_at_k(&scores, &[vec![0, 1]], 2).unwrap(), 0.5);
    assert_eq!(recall_at_k(&scores, &[vec![0, 3]], 4).unwrap(), 1.0);
    assert_eq!(recall_at_k(&scores, &[vec![0, 3]], 30).unwrap(), 1.0);
    assert!(matches!(
        recall_at_k(&scores, &[vec![]], 2),
        Err(CoreError::InvalidRecord { record: 0, .. })
    ));
    assert!(recall_at_k(&scores, &[vec![1]], 0).is_err());
}

#[test]
fn top_k_breaks_ties_toward_lower_index() {
    assert_eq!(top_k(&[0.5, 0.7, 0.5, 0.5], 3), vec![1, 0, 2]);
}

#[test]
fn metrics_agree_with_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let (scores, labels) = binary_instance(&mut rng);
        assert_eq!(auroc(&scores, &labels).unwrap(), auroc_pairs(&scores, &labels));
        assert_eq!(aupr(&scores, &labels).unwrap(), aupr_thresholds(&scores, &labels));
        let (scores, truth) = multilabel_instance(&mut rng, 10, 8);
        let k = rng.random_range(1..10);
        assert_eq!(recall_at_k(&scores, &truth, k).unwrap(), recall_sets(&scores, &truth, k));
    }
}

#[test]
fn evaluate_dispatches_on_task() {
    let probs = vec![vec![0.8], vec![0.3], vec![0.6]];
    let labels = vec![Label::Binary(1), Label::Binary(0), Label::Binary(0)];
    let m = Metrics::evaluate(TaskKind::Binary, &probs, &labels).unwrap();
    assert_eq!(m, Metrics::Binary { auroc: 1.0, aupr: 1.0 });
    assert_eq!(m.selection(), 1.0);

    let probs = vec![vec![0.2; 5]];
    let labels = vec![Label::MultiLabel(vec![4])];
    let m = Metrics::evaluate(TaskKind::MultiLabel { classes: 5 }, &probs, &labels).unwrap();
    assert_eq!(m.entries().iter().map(|e| e.1).collect::<Vec<_>>(), vec![1.0; 3]);
}

proptest! {
    #[test]
    fn auroc_is_invariant_under_monotone_maps(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, labels) = binary_instance(&mut rng);
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&mapped, &labels).unwrap());
    }

    #[test]
    fn perfect_ranking_has_unit_aupr(n in 1usize..20, p in 1usize..20) {
        let p = p.min(n);
        let scores: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
        let labels: Vec<bool> = (0..n).map(|i| i < p).collect();
        prop_assert_eq!(aupr(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn recall_is_non_decreasing_in_k(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, truth) = multilabel_instance(&mut rng, 6, 9);
        let mut previous = 0.0;
        for k in 1..=10 {
            let r = recall_at_k(&scores, &truth, k).unwrap();
            prop_assert!(r >= previous);
            previous = r;
        }
        prop_assert_eq!(previous, 1.0);
    }
}
