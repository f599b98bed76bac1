//! Discretization of a trained supernet: iterative pruning with
//! finetuning, plus the argmax and perturbation baselines.

mod architecture;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use architecture::{
    ArchitectureExport, DiscreteArchitecture, NodeChoice, PipelineChoice, Provenance, ARCHITECTURE_FORMAT,
};

use crate::data::{shuffled_batches, Batch, DatasetSplit, PatientRecord};
use crate::error::{CoreError, Result};
use crate::search::{EdgeId, Supernet};
use crate::train::{evaluate, BilevelTrainer, Evaluation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretizer {
    /// Iterative removal with finetuning.
    Prune,
    /// Per-edge argmax of the architecture weights.
    Magnitude,
    /// One pass keeping, per edge, the candidate whose removal hurts most.
    Perturb,
}

impl Discretizer {
    pub const ALL: [Discretizer; 3] = [Discretizer::Prune, Discretizer::Magnitude, Discretizer::Perturb];

    pub fn name(self) -> &'static str {
        match self {
            Discretizer::Prune => "prune",
            Discretizer::Magnitude => "magnitude",
            Discretizer::Perturb => "perturb",
        }
    }
}

impl fmt::Display for Discretizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Discretizer {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown discretizer `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub seed: u64,
    /// Alternating weight/architecture step pairs after each removal.
    pub finetune_steps: usize,
    pub finetune_lr: f64,
    pub batch_size: usize,
    /// λ used by the architecture half of finetuning.
    pub penalty_weight: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            finetune_steps: 50,
            finetune_lr: 3e-3,
            batch_size: 32,
            penalty_weight: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub edge: EdgeId,
    pub removed: String,
    pub removed_index: usize,
    /// Live candidates left on the edge after this removal.
    pub remaining: usize,
    pub metric_after_removal: f64,
    pub metric_after_finetune: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub initial_metric: f64,
    /// Live candidates per edge before pruning started.
    pub initial_counts: Vec<(EdgeId, usize)>,
    pub events: Vec<PruneEvent>,
}

impl PruneTrace {
    /// Metric after the last finetune, or the initial metric if nothing was
    /// pruned.
    pub fn final_metric(&self) -> f64 {
        self.events
            .last()
            .map(|e| e.metric_after_finetune)
            .unwrap_or(self.initial_metric)
    }

    /// Each event removes exactly one candidate from its edge, counts only
    /// go down, and every edge ends with one candidate.
    pub fn is_monotone_resolving(&self) -> bool {
        let mut counts = self.initial_counts.clone();
        for e in &self.events {
            let Some(slot) = counts.iter_mut().find(|(id, _)| *id == e.edge) else {
                return false;
            };
            if slot.1 < 2 || e.remaining != slot.1 - 1 {
                return false;
            }
            slot.1 = e.remaining;
        }
        counts.iter().all(|(_, c)| *c == 1)
    }
}

/// Ordering of removal outcomes: higher metric is better, then lower loss.
fn compare_outcomes(a: &Evaluation, b: &Evaluation) -> Ordering {
    a.metrics
        .selection()
        .total_cmp(&b.metrics.selection())
        .then(b.loss.total_cmp(&a.loss))
}

fn removal_evaluation(net: &mut Supernet, edge: EdgeId, op: usize, val: &[PatientRecord]) -> Result<Evaluation> {
    {
        let e = net.edge_mut(edge)?;
        if e.alive_count() < 2 {
            return Err(CoreError::Precondition(format!(
                "edge {edge} has a single candidate, nothing to remove"
            )));
        }
        if op >= e.len() || !e.alive()[op] {
            return Err(CoreError::Precondition(format!("candidate {op} is not alive on {edge}")));
        }
        e.set_alive(op, false)?;
    }
    let result = evaluate(net, val);
    net.edge_mut(edge)?.set_alive(op, true)?;
    result
}

/// Validation metric of `net` with candidate `op` of `edge` masked out and
/// the remaining weights renormalized. The network is restored afterwards.
pub fn evaluate_removal(net: &mut Supernet, edge: EdgeId, op: usize, val: &[PatientRecord]) -> Result<f64> {
    Ok(removal_evaluation(net, edge, op, val)?.metrics.selection())
}

/// Evaluates removing every live candidate of `edge`; returns
/// `(candidate, outcome)` pairs in index order.
fn removal_outcomes(net: &mut Supernet, edge: EdgeId, val: &[PatientRecord]) -> Result<Vec<(usize, Evaluation)>> {
    net.edge(edge)?
        .alive_indices()
        .into_iter()
        .map(|op| Ok((op, removal_evaluation(net, edge, op, val)?)))
        .collect()
}

fn finetune(
    trainer: &mut BilevelTrainer,
    net: &mut Supernet,
    data: &DatasetSplit,
    steps: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for _ in 0..steps {
        if train.is_empty() {
            train = shuffled_batches(data.train.len(), batch_size, rng);
            train.reverse();
        }
        if val.is_empty() {
            val = shuffled_batches(data.validation.len(), batch_size, rng);
            val.reverse();
        }
        let idx = train.pop().expect("refilled above");
        let batch = Batch::gather(&data.train, &idx, &data.dims, data.task)?;
        trainer.train_step_weights(net, &batch)?;
        let idx = val.pop().expect("refilled above");
        let batch = Batch::gather(&data.validation, &idx, &data.dims, data.task)?;
        trainer.train_step_arch(net, &batch)?;
    }
    Ok(())
}

/// Iterative pruning.
///
/// Unfinished edges are visited in a seeded random order, each once per
/// sweep. On the visited edge every live candidate is tentatively removed
/// and the network evaluated on the validation split; the candidate whose
/// removal leaves the best metric (ties: lower validation loss, then lower
/// index) is removed for good. The remaining network is then finetuned for
/// a few steps. Stops when every edge has one candidate.
pub fn prune_supernet(
    net: &mut Supernet,
    data: &DatasetSplit,
    cfg: &PruneConfig,
) -> Result<(DiscreteArchitecture, PruneTrace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = BilevelTrainer::new(cfg.finetune_lr, cfg.finetune_lr, cfg.penalty_weight);
    let initial_counts = net
        .edge_ids()
        .into_iter()
        .map(|id| Ok((id, net.edge(id)?.alive_count())))
        .collect::<Result<Vec<_>>>()?;
    let initial_metric = evaluate(net, &data.validation)?.metrics.selection();
    let mut events = Vec::new();
    loop {
        let mut open: Vec<EdgeId> = net
            .edge_ids()
            .into_iter()
            .filter(|id| net.edge(*id).map(|e| !e.is_resolved()).unwrap_or(false))
            .collect();
        if open.is_empty() {
            break;
        }
        open.shuffle(&mut rng);
        for edge in open {
            let outcomes = removal_outcomes(net, edge, &data.validation)?;
            let (op, outcome) = outcomes
                .iter()
                .fold(None::<&(usize, Evaluation)>, |best, cur| match best {
                    Some(b) if compare_outcomes(&cur.1, &b.1) != Ordering::Greater => Some(b),
                    _ => Some(cur),
                })
                .expect("open edge has live candidates");
            let e = net.edge_mut(edge)?;
            let removed = e.candidate_names()[*op].to_string();
            e.set_alive(*op, false)?;
            let remaining = e.alive_count();
            finetune(&mut trainer, net, data, cfg.finetune_steps, cfg.batch_size, &mut rng)?;
            let after = evaluate(net, &data.validation)?.metrics.selection();
            events.push(PruneEvent {
                edge,
                removed,
                removed_index: *op,
                remaining,
                metric_after_removal: outcome.metrics.selection(),
                metric_after_finetune: after,
            });
        }
    }
    let trace = PruneTrace {
        initial_metric,
        initial_counts,
        events,
    };
    Ok((DiscreteArchitecture::from_supernet(net)?, trace))
}

/// Per-edge argmax of the architecture weights; ties go to the lower index.
pub fn discretize_magnitude(net: &Supernet) -> Result<DiscreteArchitecture> {
    let mut resolved = net.clone();
    for id in resolved.edge_ids() {
        let edge = resolved.edge_mut(id)?;
        let keep = edge.strongest();
        edge.keep_only(keep)?;
    }
    DiscreteArchitecture::from_supernet(&resolved)
}

/// One pass over the edges in canonical order without finetuning: on each
/// edge keep the candidate whose removal degrades the validation metric
/// most (ties: higher validation loss, then lower index), and fix that
/// choice before moving on.
pub fn discretize_perturbation(net: &Supernet, val: &[PatientRecord]) -> Result<DiscreteArchitecture> {
    let mut work = net.clone();
    for id in work.edge_ids() {
        if work.edge(id)?.is_resolved() {
            continue;
        }
        let outcomes = removal_outcomes(&mut work, id, val)?;
        let (keep, _) = outcomes
            .iter()
            .fold(None::<&(usize, Evaluation)>, |best, cur| match best {
                Some(b) if compare_outcomes(&cur.1, &b.1) != Ordering::Less => Some(b),
                _ => Some(cur),
            })
            .expect("open edge has live candidates");
        work.edge_mut(id)?.keep_only(*keep)?;
    }
    DiscreteArchitecture::from_supernet(&work)
}

/// Applies the chosen discretizer. `net` is modified only by
/// [`Discretizer::Prune`], which also returns its trace.
pub fn discretize(
    method: Discretizer,
    net: &mut Supernet,
    data: &DatasetSplit,
    cfg: &PruneConfig,
) -> Result<(DiscreteArchitecture, Option<PruneTrace>)> {
    match method {
        Discretizer::Prune => prune_supernet(net, data, cfg).map(|(a, t)| (a, Some(t))),
        Discretizer::Magnitude => Ok((discretize_magnitude(net)?, None)),
        Discretizer::Perturb => Ok((discretize_perturbation(net, &data.validation)?, None)),
    }
}
