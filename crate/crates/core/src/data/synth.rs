//! Synthetic multimodal datasets with planted cross-modal structure.
//!
//! Each rule draws a small set of latent variables per record, renders the
//! four modalities from them and derives the label from the latents, so the
//! optimal predictor is known in closed form:
//!
//! * `temporal-cross`: label = (channel 0 of `M` rises over time) ∧ (`p[0] > 0`).
//!   Channel 0 is `c + s·r_t` with a per-record offset `c ~ N(0,1)`, slope sign
//!   `s = ±1` and centred ramp `r_t ∈ [-1, 1]`, so only an encoder that looks
//!   at temporal order can recover `s`.
//! * `static-only`: label = `Σ p / √d₃ > τ`; every other modality is noise.
//! * `late-combo`: label = `a XOR b`, `a` the sign of channel 0 of `M`
//!   (constant over time), `b` the sign of `n[0]`. No linear function of the
//!   modality summaries exceeds accuracy 0.75.
//! * `multi-combo`: multi-label task; class `j` is active when a fixed random
//!   linear score of the clean modality summaries exceeds its threshold.
//!
//! Gaussian noise of standard deviation σ is added to every entry of `M` and
//! `n` after the label is fixed. Binary latents are assigned by stratified
//! sampling, so class balance matches the configured prevalence up to
//! rounding.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::record::{DatasetSplit, Dims, Label, PatientRecord, TaskKind};
use crate::error::{CoreError, Result};

const DISCRETE_RATE: f64 = 0.2;
const MAX_CLASSES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantedRule {
    TemporalCross,
    StaticOnly,
    LateCombo,
    MultiCombo,
}

impl PlantedRule {
    pub const ALL: [PlantedRule; 4] = [
        PlantedRule::TemporalCross,
        PlantedRule::StaticOnly,
        PlantedRule::LateCombo,
        PlantedRule::MultiCombo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlantedRule::TemporalCross => "temporal-cross",
            PlantedRule::StaticOnly => "static-only",
            PlantedRule::LateCombo => "late-combo",
            PlantedRule::MultiCombo => "multi-combo",
        }
    }
}

impl fmt::Display for PlantedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlantedRule {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| CoreError::UnknownRule(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub dims: Dims,
    /// P, only used by `multi-combo`.
    pub classes: usize,
    pub rule: PlantedRule,
    /// σ, standard deviation of the noise on `M` and `n`.
    pub noise: f64,
    /// Target fraction of positive labels (per class for `multi-combo`).
    pub prevalence: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(rule: PlantedRule, seed: u64) -> Self {
        Self {
            train: 600,
            validation: 150,
            test: 150,
            dims: Dims {
                continuous: 4,
                discrete: 4,
                demographics: 4,
                note: 4,
                steps: 8,
            },
            classes: 8,
            rule,
            noise: 0.0,
            prevalence: 0.5,
            seed,
        }
    }

    pub fn task(&self) -> TaskKind {
        match self.rule {
            PlantedRule::MultiCombo => TaskKind::MultiLabel {
                classes: self.classes,
            },
            _ => TaskKind::Binary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(CoreError::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(CoreError::Config(format!(
                "prevalence must lie in (0, 1), got {}",
                self.prevalence
            )));
        }
        match self.rule {
            PlantedRule::TemporalCross if self.dims.steps < 2 => {
                Err(CoreError::Config("temporal-cross needs at least 2 time slots".into()))
            }
            PlantedRule::LateCombo if self.prevalence > 0.5 => Err(CoreError::Config(
                "late-combo (XOR) prevalence cannot exceed 0.5".into(),
            )),
            PlantedRule::MultiCombo if !(2..=MAX_CLASSES).contains(&self.classes) => Err(
                CoreError::Config(format!("multi-combo needs 2..={MAX_CLASSES} classes")),
            ),
            _ => Ok(()),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Accuracy of a classifier that predicts one latent bit with prior `prior`
/// from a Gaussian statistic whose class means are `separation` standard
/// deviations apart.
fn bit_accuracy(prior: f64, separation: f64) -> f64 {
    if separation.is_infinite() {
        return 1.0;
    }
    let phi = std_normal();
    let shift = ((1.0 - prior) / prior).ln() / separation;
    prior * phi.cdf(separation / 2.0 - shift) + (1.0 - prior) * phi.cdf(separation / 2.0 + shift)
}

fn ramp(steps: usize) -> Vec<f64> {
    let half = (steps as f64 - 1.0) / 2.0;
    (0..steps).map(|t| (t as f64 - half) / half).collect()
}

fn xor_prior(prevalence: f64) -> f64 {
    (1.0 - (1.0 - 2.0 * prevalence).sqrt()) / 2.0
}

/// Accuracy of the Bayes-optimal classifier for binary rules.
///
/// `temporal-cross`: `1 - ρ + ρ·A(ρ, 2‖r‖/σ)` with `ρ = √prevalence` and `A`
/// the accuracy of a prior-shifted Gaussian test ([`bit_accuracy`]).
/// `late-combo`: `A_a·A_b + (1-A_a)(1-A_b)`, separations `2√T/σ` and `2/σ`.
/// `static-only` is noise-free in `p`, hence 1. Returns `None` for the
/// multi-label rule.
pub fn bayes_accuracy(cfg: &SynthConfig) -> Option<f64> {
    let sep = |signal: f64| {
        if cfg.noise == 0.0 {
            f64::INFINITY
        } else {
            signal / cfg.noise
        }
    };
    match cfg.rule {
        PlantedRule::StaticOnly => Some(1.0),
        PlantedRule::TemporalCross => {
            let rho = cfg.prevalence.sqrt();
            let norm = ramp(cfg.dims.steps).iter().map(|v| v * v).sum::<f64>().sqrt();
            Some(1.0 - rho + rho * bit_accuracy(rho, sep(2.0 * norm)))
        }
        PlantedRule::LateCombo => {
            let q = xor_prior(cfg.prevalence);
            let a = bit_accuracy(q, sep(2.0 * (cfg.dims.steps as f64).sqrt()));
            let b = bit_accuracy(q, sep(2.0));
            Some(a * b + (1.0 - a) * (1.0 - b))
        }
        PlantedRule::MultiCombo => None,
    }
}

/// Per-class linear rules of `multi-combo`, drawn once per dataset.
struct ClassRules {
    weights: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
}

impl ClassRules {
    fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.dims;
        let t = d.steps as f64;
        // mean and variance of each summary coordinate
        let mut moments = Vec::new();
        moments.extend(std::iter::repeat_n((0.0, 1.0 / t), d.continuous));
        moments.extend(std::iter::repeat_n(
            (DISCRETE_RATE, DISCRETE_RATE * (1.0 - DISCRETE_RATE) / t),
            d.discrete,
        ));
        moments.extend(std::iter::repeat_n((0.0, 1.0), d.demographics + d.note));
        let z = std_normal().inverse_cdf(1.0 - cfg.prevalence);
        let mut weights = Vec::with_capacity(cfg.classes);
        let mut thresholds = Vec::with_capacity(cfg.classes);
        for _ in 0..cfg.classes {
            let w: Vec<f64> = moments.iter().map(|_| rng.sample(StandardNormal)).collect();
            let mean: f64 = w.iter().zip(&moments).map(|(w, m)| w * m.0).sum();
            let var: f64 = w.iter().zip(&moments).map(|(w, m)| w * w * m.1).sum();
            thresholds.push(mean + var.sqrt() * z);
            weights.push(w);
        }
        Self { weights, thresholds }
    }

    fn label(&self, summary: &[f64]) -> Vec<usize> {
        let scores: Vec<f64> = self
            .weights
            .iter()
            .map(|w| w.iter().zip(summary).map(|(a, b)| a * b).sum())
            .collect();
        let mut active: Vec<usize> = scores
            .iter()
            .zip(&self.thresholds)
            .enumerate()
            .filter(|(_, (s, t))| s > t)
            .map(|(j, _)| j)
            .collect();
        if active.is_empty() {
            let best = scores
                .iter()
                .enumerate()
                .fold(0, |best, (j, s)| if *s > scores[best] { j } else { best });
            active.push(best);
        }
        active
    }
}

/// Concatenated clean modality summaries: time-mean of every `M` and `E`
/// channel, then `p`, then `n`.
pub fn modality_summary(r: &PatientRecord) -> Vec<f64> {
    let mean = |row: &Vec<f64>| row.iter().sum::<f64>() / row.len() as f64;
    r.continuous
        .iter()
        .map(mean)
        .chain(r.discrete.iter().map(mean))
        .chain(r.demographics.iter().copied())
        .chain(r.note.iter().copied())
        .collect()
}

/// Assigns one of `probs.len()` strata to each of `n` records with counts
/// proportional to `probs` (largest remainder), in shuffled order.
fn stratified(probs: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let raw: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|a, b| {
        let ra = raw[*a] - raw[*a].floor();
        let rb = raw[*b] - raw[*b].floor();
        rb.total_cmp(&ra).then(a.cmp(b))
    });
    let mut missing = n - counts.iter().sum::<usize>();
    for k in order.into_iter().cycle() {
        if missing == 0 {
            break;
        }
        counts[k] += 1;
        missing -= 1;
    }
    let mut strata: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, c)| std::iter::repeat_n(k, *c))
        .collect();
    strata.shuffle(rng);
    strata
}

/// Probabilities of the four (bit1, bit2) strata, indexed `2·bit1 + bit2`.
fn pair_strata(p1: f64, p2: f64) -> [f64; 4] {
    [
        (1.0 - p1) * (1.0 - p2),
        (1.0 - p1) * p2,
        p1 * (1.0 - p2),
        p1 * p2,
    ]
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn base_record(d: &Dims, rng: &mut ChaCha8Rng) -> PatientRecord {
    let continuous = (0..d.continuous).map(|_| gaussian_vec(rng, d.steps)).collect();
    let discrete = (0..d.discrete)
        .map(|_| {
            (0..d.steps)
                .map(|_| if rng.random_bool(DISCRETE_RATE) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    PatientRecord {
        continuous,
        discrete,
        demographics: gaussian_vec(rng, d.demographics),
        note: gaussian_vec(rng, d.note),
        label: Label::Binary(0),
    }
}

fn add_noise(r: &mut PatientRecord, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    for v in r.continuous.iter_mut().flatten() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    for v in r.note.iter_mut() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
}

fn sign(bit: bool) -> f64 {
    if bit {
        1.0
    } else {
        -1.0
    }
}

fn generate_part(
    cfg: &SynthConfig,
    rules: Option<&ClassRules>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<PatientRecord> {
    let d = cfg.dims;
    let strata = match cfg.rule {
        PlantedRule::TemporalCross => {
            let rho = cfg.prevalence.sqrt();
            stratified(&pair_strata(rho, rho), n, rng)
        }
        PlantedRule::LateCombo => {
            let q = xor_prior(cfg.prevalence);
            stratified(&pair_strata(q, q), n, rng)
        }
        _ => vec![0; n],
    };
    let r_t = if d.steps >= 2 { ramp(d.steps) } else { vec![0.0] };
    let threshold = std_normal().inverse_cdf(1.0 - cfg.prevalence);
    strata
        .into_iter()
        .map(|stratum| {
            let mut rec = base_record(&d, rng);
            let (bit1, bit2) = (stratum & 2 != 0, stratum & 1 != 0);
            rec.label = match cfg.rule {
                PlantedRule::TemporalCross => {
                    let (rise, positive) = (bit1, bit2);
                    let offset: f64 = rng.sample(StandardNormal);
                    for (v, r) in rec.continuous[0].iter_mut().zip(&r_t) {
                        *v = offset + sign(rise) * r;
                    }
                    let magnitude: f64 = rng.sample::<f64, _>(StandardNormal).abs() + 0.1;
                    rec.demographics[0] = sign(positive) * magnitude;
                    Label::Binary(u8::from(rise && positive))
                }
                PlantedRule::StaticOnly => {
                    let score = rec.demographics.iter().sum::<f64>() / (d.demographics as f64).sqrt();
                    Label::Binary(u8::from(score > threshold))
                }
                PlantedRule::LateCombo => {
                    let (a, b) = (bit1, bit2);
                    rec.continuous[0].iter_mut().for_each(|v| *v = sign(a));
                    rec.note[0] = sign(b);
                    Label::Binary(u8::from(a != b))
                }
                PlantedRule::MultiCombo => {
                    let rules = rules.expect("class rules drawn for multi-combo");
                    Label::MultiLabel(rules.label(&modality_summary(&rec)))
                }
            };
            add_noise(&mut rec, cfg.noise, rng);
            rec
        })
        .collect()
}

/// Draws a full dataset. Identical configs give identical datasets.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rules = (cfg.rule == PlantedRule::MultiCombo).then(|| ClassRules::draw(cfg, &mut rng));
    let train = generate_part(cfg, rules.as_ref(), cfg.train, &mut rng);
    let validation = generate_part(cfg, rules.as_ref(), cfg.validation, &mut rng);
    let test = generate_part(cfg, rules.as_ref(), cfg.test, &mut rng);
    Ok(DatasetSplit {
        dims: cfg.dims,
        task: cfg.task(),
        train,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_names_round_trip() {
        for r in PlantedRule::ALL {
            assert_eq!(r.name().parse::<PlantedRule>().unwrap(), r);
        }
        assert!(matches!(
            "nonsense".parse::<PlantedRule>(),
            Err(CoreError::UnknownRule(_))
        ));
    }

    #[test]
    fn stratified_counts_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = stratified(&[0.25; 4], 10_000, &mut rng);
        for k in 0..4 {
            assert_eq!(s.iter().filter(|v| **v == k).count(), 2500);
        }
        let s = stratified(&[0.1, 0.2, 0.7], 7, &mut rng);
        assert_eq!(s.len(), 7);
    }

    #[test]
    fn bayes_accuracy_limits() {
        let mut cfg = SynthConfig::new(PlantedRule::LateCombo, 0);
        assert_eq!(bayes_accuracy(&cfg), Some(1.0));
        cfg.noise = 1e6;
        // both bits at chance: XOR accuracy 0.5
        assert!((bayes_accuracy(&cfg).unwrap() - 0.5).abs() < 1e-3);
        cfg.rule = PlantedRule::TemporalCross;
        // rise undetectable: guess the more likely slope when p[0] > 0
        let rho = 0.5f64.sqrt();
        assert!((bayes_accuracy(&cfg).unwrap() - (1.0 - rho + rho * rho)).abs() < 1e-3);
        cfg.rule = PlantedRule::MultiCombo;
        assert_eq!(bayes_accuracy(&cfg), None);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SynthConfig::new(PlantedRule::LateCombo, 0);
        cfg.prevalence = 0.7;
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::new(PlantedRule::StaticOnly, 0);
        cfg.noise = -1.0;
        assert!(cfg.validate().is_err());
        cfg.noise = 0.0;
        cfg.dims.note = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::new(PlantedRule::MultiCombo, 0);
        cfg.classes = 64;
        assert!(cfg.validate().is_err());
    }
}
