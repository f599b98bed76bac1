//! Brute-force reference implementations of the ranking metrics.

use rand::Rng;

/// Counts every positive/negative pair, half credit for ties.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut doubled, mut pairs) = (0u128, 0u128);
    for (i, si) in scores.iter().enumerate() {
        for (j, sj) in scores.iter().enumerate() {
            if !labels[i] || labels[j] {
                continue;
            }
            pairs += 1;
            doubled += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Recounts TP/FP from scratch at every distinct threshold and sums
/// recall increments times precision.
pub fn aupr_thresholds(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|l| **l).count();
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut previous_tp = 0usize;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count();
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count();
        if tp > previous_tp {
            area += (tp - previous_tp) as f64 * (tp as f64 / (tp + fp) as f64);
        }
        previous_tp = tp;
    }
    area / positives as f64
}

/// A class is in the top k when fewer than k classes beat it, where a
/// tie is won by the lower index.
pub fn recall_sets(scores: &[Vec<f64>], truth: &[Vec<usize>], k: usize) -> f64 {
    let mut total = 0.0;
    for (s, t) in scores.iter().zip(truth) {
        let in_top = |c: usize| {
            let beaten_by = (0..s.len())
                .filter(|&j| s[j] > s[c] || (s[j] == s[c] && j < c))
                .count();
            beaten_by < k
        };
        let hits = t.iter().filter(|c| in_top(**c)).count();
        total += hits as f64 / t.len() as f64;
    }
    total / scores.len() as f64
}

/// Scores on a coarse grid so ties are common; both classes present.
pub fn binary_instance<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..16);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    (scores, labels)
}

pub fn multilabel_instance<R: Rng>(rng: &mut R, samples: usize, classes: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let scores = (0..samples)
        .map(|_| (0..classes).map(|_| rng.random_range(0..5) as f64 / 4.0).collect())
        .collect();
    let truth = (0..samples)
        .map(|_| {
            let mut set: Vec<usize> = (0..classes).filter(|_| rng.random_bool(0.3)).collect();
            if set.is_empty() {
                set.push(rng.random_range(0..classes));
            }
            set
        })
        .collect();
    (scores, truth)
}
