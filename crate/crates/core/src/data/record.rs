use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Prediction target of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Binary(u8),
    /// Class indices in `0..P`, sorted and non-empty.
    MultiLabel(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskKind {
    Binary,
    MultiLabel { classes: usize },
}

impl TaskKind {
    /// Width of the prediction head.
    pub fn outputs(self) -> usize {
        match self {
            TaskKind::Binary => 1,
            TaskKind::MultiLabel { classes } => classes,
        }
    }
}

/// Extents shared by every record of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// d₁: continuous event channels.
    pub continuous: usize,
    /// d₂: discrete event vocabulary.
    pub discrete: usize,
    /// d₃: demographic features.
    pub demographics: usize,
    /// d₄: note embedding width.
    pub note: usize,
    /// T: time slots.
    pub steps: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.continuous,
            self.discrete,
            self.demographics,
            self.note,
            self.steps,
        ];
        if all.contains(&0) {
            return Err(CoreError::Config(format!("all dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

/// One patient sample with its four modalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    /// Continuous events, `d₁` rows of length `T`.
    #[serde(rename = "M")]
    pub continuous: Vec<Vec<f64>>,
    /// Multi-hot discrete events, `d₂` rows of length `T`.
    #[serde(rename = "E")]
    pub discrete: Vec<Vec<f64>>,
    #[serde(rename = "p")]
    pub demographics: Vec<f64>,
    /// Precomputed note vector, used as-is.
    #[serde(rename = "n")]
    pub note: Vec<f64>,
    pub label: Label,
}

impl PatientRecord {
    /// Checks the record against the dataset extents and task.
    pub fn validate(&self, dims: &Dims, task: TaskKind) -> std::result::Result<(), String> {
        check_matrix("M", &self.continuous, dims.continuous, dims.steps)?;
        check_matrix("E", &self.discrete, dims.discrete, dims.steps)?;
        if self.discrete.iter().flatten().any(|v| *v != 0.0 && *v != 1.0) {
            return Err("E entries must be 0 or 1".into());
        }
        check_vector("p", &self.demographics, dims.demographics)?;
        check_vector("n", &self.note, dims.note)?;
        match (&self.label, task) {
            (Label::Binary(v), TaskKind::Binary) if *v <= 1 => Ok(()),
            (Label::Binary(v), TaskKind::Binary) => Err(format!("binary label {v} not in {{0,1}}")),
            (Label::MultiLabel(set), TaskKind::MultiLabel { classes }) => {
                if set.is_empty() {
                    return Err("multi-label set is empty".into());
                }
                if set.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("multi-label set must be strictly increasing".into());
                }
                if set.iter().any(|c| *c >= classes) {
                    return Err(format!("class index outside 0..{classes}"));
                }
                Ok(())
            }
            _ => Err("label kind does not match the task".into()),
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self.label, Label::Binary(1))
    }
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> std::result::Result<(), String> {
    if m.len() != rows {
        return Err(format!("{name} has {} rows, expected {rows}", m.len()));
    }
    for row in m {
        if row.len() != cols {
            return Err(format!("{name} row has {} time slots, expected {cols}", row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(format!("{name} has a non-finite entry"));
        }
    }
    Ok(())
}

fn check_vector(name: &str, v: &[f64], len: usize) -> std::result::Result<(), String> {
    if v.len() != len {
        return Err(format!("{name} has length {}, expected {len}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("{name} has a non-finite entry"));
    }
    Ok(())
}

/// Train / validation / test partition of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub dims: Dims,
    pub task: TaskKind,
    pub train: Vec<PatientRecord>,
    pub validation: Vec<PatientRecord>,
    pub test: Vec<PatientRecord>,
}

/// Default train:validation:test ratio.
pub const SPLIT_RATIO: [f64; 3] = [7.0, 1.5, 1.5];

/// Splits `total` records by `ratio`; rounding remainder goes to train.
pub fn split_counts(total: usize, ratio: [f64; 3]) -> (usize, usize, usize) {
    let sum: f64 = ratio.iter().sum();
    let val = (total as f64 * ratio[1] / sum).round() as usize;
    let test = (total as f64 * ratio[2] / sum).round() as usize;
    let train = total.saturating_sub(val + test);
    (train, val, test)
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        for (i, r) in self.all_records().enumerate() {
            r.validate(&self.dims, self.task)
                .map_err(|reason| CoreError::InvalidRecord { record: i, reason })?;
        }
        Ok(())
    }

    pub fn all_records(&self) -> impl Iterator<Item = &PatientRecord> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
