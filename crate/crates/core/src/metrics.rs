//! Ranking metrics used for validation, pruning decisions and reports.

use serde::{Deserialize, Serialize};

use crate::data::{Label, TaskKind};
use crate::error::{CoreError, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(CoreError::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CoreError::UndefinedMetric("non-finite score".into()));
    }
    Ok(())
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve as the Mann–Whitney statistic, with half
/// credit for tied positive/negative pairs.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|l| **l).count() as u128;
    let negatives = labels.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return Err(CoreError::UndefinedMetric(
            "AUROC needs at least one positive and one negative".into(),
        ));
    }
    // walk from the highest score down; count negatives still below
    let mut negatives_below = negatives;
    let mut doubled = 0u128;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|i| labels[**i]).count() as u128;
        let neg = group.len() as u128 - pos;
        negatives_below -= neg;
        doubled += 2 * pos * negatives_below + pos * neg;
    }
    Ok(doubled as f64 / (2 * positives * negatives) as f64)
}

/// Area under the step-wise precision–recall curve: `Σ ΔR · P` over the
/// distinct score thresholds, no interpolation. Accumulated as
/// `Σ ΔTP · P / #positives` so a perfect ranking gives exactly 1.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(CoreError::UndefinedMetric("AUPR needs at least one positive".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|i| labels[**i]).count();
        tp += pos;
        fp += group.len() - pos;
        if pos > 0 {
            area += pos as f64 * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area / positives as f64)
}

/// Top-`k` class indices by score; ties go to the lower class index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    order.truncate(k);
    order
}

/// Mean over samples of `|top-k ∩ truth| / |truth|`.
pub fn recall_at_k(scores: &[Vec<f64>], truth: &[Vec<usize>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(CoreError::UndefinedMetric("recall@k needs k >= 1".into()));
    }
    if scores.len() != truth.len() || scores.is_empty() {
        return Err(CoreError::Dimension(format!(
            "{} score vectors for {} label sets",
            scores.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (i, (s, t)) in scores.iter().zip(truth).enumerate() {
        if t.is_empty() {
            return Err(CoreError::InvalidRecord {
                record: i,
                reason: "empty label set".into(),
            });
        }
        let top = top_k(s, k);
        let hits = t.iter().filter(|c| top.contains(c)).count();
        total += hits as f64 / t.len() as f64;
    }
    Ok(total / scores.len() as f64)
}

/// Cut-offs reported for multi-label tasks.
pub const RECALL_CUTOFFS: [usize; 3] = [10, 20, 30];

/// Evaluation summary for one model on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Metrics {
    Binary {
        auroc: f64,
        aupr: f64,
    },
    MultiLabel {
        recall_at_10: f64,
        recall_at_20: f64,
        recall_at_30: f64,
    },
}

impl Metrics {
    /// Scores `probs` (as returned by the network) against `labels`.
    pub fn evaluate(task: TaskKind, probs: &[Vec<f64>], labels: &[Label]) -> Result<Self> {
        match task {
            TaskKind::Binary => {
                let scores: Vec<f64> = probs.iter().map(|p| p[0]).collect();
                let truth: Vec<bool> = labels.iter().map(|l| matches!(l, Label::Binary(1))).collect();
                Ok(Metrics::Binary {
                    auroc: auroc(&scores, &truth)?,
                    aupr: aupr(&scores, &truth)?,
                })
            }
            TaskKind::MultiLabel { .. } => {
                let truth = labels
                    .iter()
                    .map(|l| match l {
                        Label::MultiLabel(set) => Ok(set.clone()),
                        Label::Binary(_) => Err(CoreError::Dimension(
                            "binary label in a multi-label task".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let r = |k| recall_at_k(probs, &truth, k);
                Ok(Metrics::MultiLabel {
                    recall_at_10: r(RECALL_CUTOFFS[0])?,
                    recall_at_20: r(RECALL_CUTOFFS[1])?,
                    recall_at_30: r(RECALL_CUTOFFS[2])?,
                })
            }
        }
    }

    /// The metric that drives pruning decisions: AUPR or R@10.
    pub fn selection(&self) -> f64 {
        match self {
            Metrics::Binary { aupr, .. } => *aupr,
            Metrics::MultiLabel { recall_at_10, .. } => *recall_at_10,
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Metrics::Binary { auroc, aupr } => vec![("auroc", auroc), ("aupr", aupr)],
            Metrics::MultiLabel {
                recall_at_10,
                recall_at_20,
                recall_at_30,
            } => vec![("r@10", recall_at_10), ("r@20", recall_at_20), ("r@30", recall_at_30)],
        }
    }
}
