use mmnas_autodiff::{Graph, ParamKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::penalty::{penalty, penalty_value, selector_distributions};
use crate::data::{shuffled_batches, Batch, DatasetSplit, PatientRecord};
use crate::error::{CoreError, Result};
use crate::metrics::Metrics;
use crate::search::Supernet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Step size for network weights.
    pub lr_weights: f64,
    /// Step size for architecture logits.
    pub lr_arch: f64,
    /// λ, weight of the diversity penalty in the architecture objective.
    pub penalty_weight: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Step size used while finetuning between pruning decisions.
    pub finetune_lr: f64,
    /// Alternating step pairs run after each pruning decision.
    pub finetune_steps: usize,
}

impl TrainConfig {
    /// Settings used for full-size runs (embedding width 256).
    pub fn reference() -> Self {
        Self {
            lr_weights: 1e-4,
            lr_arch: 1e-5,
            penalty_weight: 0.1,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            finetune_lr: 2e-6,
            finetune_steps: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.lr_weights, self.lr_arch, self.finetune_lr];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(CoreError::Config(format!("learning rates must be > 0, got {rates:?}")));
        }
        if !(self.penalty_weight.is_finite() && self.penalty_weight >= 0.0) {
            return Err(CoreError::Config("penalty weight must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(CoreError::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    /// Desk-scale settings for embedding width 32.
    fn default() -> Self {
        Self {
            lr_weights: 3e-3,
            lr_arch: 3e-3,
            penalty_weight: 0.1,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            finetune_lr: 3e-3,
            finetune_steps: 50,
        }
    }
}

/// Loss and metrics of a network on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: Metrics,
}

const EVAL_CHUNK: usize = 256;

/// Mean loss, output probabilities and metrics over `records`.
pub fn evaluate(net: &Supernet, records: &[PatientRecord]) -> Result<Evaluation> {
    if records.is_empty() {
        return Err(CoreError::Precondition("cannot evaluate an empty split".into()));
    }
    let mut probs = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut loss_sum = 0.0;
    for chunk in records.chunks(EVAL_CHUNK) {
        let batch = Batch::new(chunk, net.dims(), net.task())?;
        let mut g = Graph::new();
        let out = net.forward(&mut g, &batch)?;
        let targets = g.constant(batch.targets.clone());
        let (loss, p) = match net.task() {
            crate::data::TaskKind::Binary => (
                g.bce_with_logits(out.logits, targets)?,
                g.sigmoid(out.logits)?,
            ),
            crate::data::TaskKind::MultiLabel { .. } => (
                g.softmax_cross_entropy(out.logits, targets)?,
                g.softmax(out.logits, 1)?,
            ),
        };
        loss_sum += g.value(loss).data()[0] * chunk.len() as f64;
        let width = net.task().outputs();
        probs.extend(g.value(p).data().chunks(width).map(<[f64]>::to_vec));
        labels.extend(batch.labels);
    }
    Ok(Evaluation {
        loss: loss_sum / records.len() as f64,
        metrics: Metrics::evaluate(net.task(), &probs, &labels)?,
    })
}

/// Selection metric (AUPR or R@10) of `net` on `records`.
pub fn selection_metric(net: &Supernet, records: &[PatientRecord]) -> Result<f64> {
    Ok(evaluate(net, records)?.metrics.selection())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean pre-step training loss over the epoch's batches.
    pub train_loss: f64,
    pub val_loss: f64,
    pub penalty: f64,
    pub val_metrics: Metrics,
}

/// Alternating optimizer state: weights on training batches, architecture
/// on validation batches (first-order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelTrainer {
    pub weights: Adam,
    pub arch: Adam,
    pub penalty_weight: f64,
    /// Total optimizer steps taken (both groups).
    pub step: usize,
}

fn check_loss(value: f64, step: usize, group: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CoreError::NonFinite {
            step,
            group: group.to_string(),
            detail: format!("loss = {value}"),
        })
    }
}

impl BilevelTrainer {
    pub fn new(lr_weights: f64, lr_arch: f64, penalty_weight: f64) -> Self {
        Self {
            weights: Adam::new(lr_weights),
            arch: Adam::new(lr_arch),
            penalty_weight,
            step: 0,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.lr_weights, cfg.lr_arch, cfg.penalty_weight)
    }

    /// One update of the network weights on a training batch, architecture
    /// frozen. Returns the loss before the update.
    pub fn train_step_weights(&mut self, net: &mut Supernet, batch: &Batch) -> Result<f64> {
        net.set_trainable(ParamKind::Architecture, false);
        let result = self.weight_update(net, batch);
        net.set_trainable(ParamKind::Architecture, true);
        self.step += 1;
        result
    }

    fn weight_update(&mut self, net: &mut Supernet, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let loss = net.loss(&mut g, batch).map_err(|e| self.diagnose(e, "weights"))?;
        let value = g.value(loss).data()[0];
        check_loss(value, self.step, "weights")?;
        let grads = g.backward(loss)?;
        let params = net
            .params_mut()
            .into_iter()
            .filter(|p| p.kind() == ParamKind::Weight)
            .collect();
        self.weights.step(params, &grads, "weights", self.step)?;
        Ok(value)
    }

    /// Differentiable architecture objective: validation loss plus
    /// `λ·penalty` (the penalty is omitted entirely when `λ = 0`).
    pub fn arch_objective(&self, g: &mut Graph, net: &Supernet, batch: &Batch) -> Result<mmnas_autodiff::Var> {
        let loss = net.loss(g, batch)?;
        if self.penalty_weight == 0.0 {
            return Ok(loss);
        }
        let p = penalty(g, net)?;
        let weighted = g.affine(p, self.penalty_weight, 0.0)?;
        Ok(g.add(loss, weighted)?)
    }

    /// One update of the architecture logits on a validation batch, weights
    /// frozen. Returns the objective before the update.
    pub fn train_step_arch(&mut self, net: &mut Supernet, batch: &Batch) -> Result<f64> {
        net.set_trainable(ParamKind::Weight, false);
        let result = self.arch_update(net, batch);
        net.set_trainable(ParamKind::Weight, true);
        self.step += 1;
        result
    }

    fn arch_update(&mut self, net: &mut Supernet, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let objective = self
            .arch_objective(&mut g, net, batch)
            .map_err(|e| self.diagnose(e, "architecture"))?;
        let value = g.value(objective).data()[0];
        check_loss(value, self.step, "architecture")?;
        let grads = g.backward(objective)?;
        let params = net
            .params_mut()
            .into_iter()
            .filter(|p| p.kind() == ParamKind::Architecture)
            .collect();
        self.arch.step(params, &grads, "architecture", self.step)?;
        Ok(value)
    }

    fn diagnose(&self, e: CoreError, group: &str) -> CoreError {
        match e {
            CoreError::Autodiff(mmnas_autodiff::AutodiffError::NonFinite { op }) => CoreError::NonFinite {
                step: self.step,
                group: group.to_string(),
                detail: format!("non-finite value produced by `{op}`"),
            },
            other => other,
        }
    }

    /// One epoch of interleaved updates: for each shuffled training batch a
    /// weight step, then an architecture step on the next validation batch.
    /// Returns the mean pre-step training loss.
    pub fn run_epoch(&mut self, net: &mut Supernet, data: &DatasetSplit, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let train = shuffled_batches(data.train.len(), batch_size, rng);
        let val = shuffled_batches(data.validation.len(), batch_size, rng);
        let mut total = 0.0;
        for (i, idx) in train.iter().enumerate() {
            let batch = Batch::gather(&data.train, idx, &data.dims, data.task)?;
            total += self.train_step_weights(net, &batch)?;
            let vidx = &val[i % val.len()];
            let vbatch = Batch::gather(&data.validation, vidx, &data.dims, data.task)?;
            self.train_step_arch(net, &vbatch)?;
        }
        Ok(total / train.len() as f64)
    }
}

/// Per-epoch record of a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Bilevel search of `net` for `cfg.epochs` epochs.
pub fn train_supernet(net: &mut Supernet, data: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainHistory> {
    let mut trainer = BilevelTrainer::from_config(cfg);
    train_with(&mut trainer, net, data, cfg)
}

/// Like [`train_supernet`] but continuing from existing optimizer state.
pub fn train_with(
    trainer: &mut BilevelTrainer,
    net: &mut Supernet,
    data: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(CoreError::Precondition("search needs train and validation records".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let train_loss = trainer.run_epoch(net, data, cfg.batch_size, &mut rng)?;
        let eval = evaluate(net, &data.validation)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: eval.loss,
            penalty: penalty_value(&selector_distributions(net)),
            val_metrics: eval.metrics,
        });
    }
    Ok(TrainHistory { epochs })
}

/// Trains only the network weights (architecture fixed) for `steps`
/// shuffled mini-batches. Used to score fixed architectures.
pub fn train_weights_only(
    net: &mut Supernet,
    records: &[PatientRecord],
    lr: f64,
    batch_size: usize,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    let mut trainer = BilevelTrainer::new(lr, lr, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = f64::NAN;
    let mut done = 0;
    while done < steps {
        for idx in shuffled_batches(records.len(), batch_size, &mut rng) {
            if done == steps {
                break;
            }
            let batch = Batch::gather(records, &idx, net.dims(), net.task())?;
            last = trainer.train_step_weights(net, &batch)?;
            done += 1;
        }
    }
    Ok(last)
}
