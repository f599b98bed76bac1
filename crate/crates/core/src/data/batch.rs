use mmnas_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

use super::record::{Dims, Label, PatientRecord, TaskKind};
use crate::error::{CoreError, Result};

/// Records stacked into batch-major tensors.
///
/// Sequences are laid out `[B, T, d]` (time-major per sample), static
/// features `[B, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub continuous: Tensor,
    pub discrete: Tensor,
    pub demographics: Tensor,
    pub note: Tensor,
    /// `[B, 1]` of 0/1 for binary tasks, `[B, P]` multi-hot rows normalized
    /// to sum 1 for multi-label tasks.
    pub targets: Tensor,
    pub labels: Vec<Label>,
}

fn transposed(rows: &[Vec<f64>], steps: usize, out: &mut Vec<f64>) {
    for t in 0..steps {
        out.extend(rows.iter().map(|row| row[t]));
    }
}

impl Batch {
    pub fn new(records: &[PatientRecord], dims: &Dims, task: TaskKind) -> Result<Self> {
        let refs: Vec<&PatientRecord> = records.iter().collect();
        Self::from_refs(&refs, dims, task)
    }

    /// Batch of `records[i]` for each `i` in `indices`, in that order.
    pub fn gather(records: &[PatientRecord], indices: &[usize], dims: &Dims, task: TaskKind) -> Result<Self> {
        let refs: Vec<&PatientRecord> = indices.iter().map(|i| &records[*i]).collect();
        Self::from_refs(&refs, dims, task)
    }

    pub fn from_refs(records: &[&PatientRecord], dims: &Dims, task: TaskKind) -> Result<Self> {
        if records.is_empty() {
            return Err(CoreError::Precondition("cannot build an empty batch".into()));
        }
        let b = records.len();
        let t = dims.steps;
        let mut m = Vec::with_capacity(b * t * dims.continuous);
        let mut e = Vec::with_capacity(b * t * dims.discrete);
        let mut p = Vec::with_capacity(b * dims.demographics);
        let mut n = Vec::with_capacity(b * dims.note);
        let width = task.outputs();
        let mut targets = Vec::with_capacity(b * width);
        for (i, r) in records.iter().enumerate() {
            r.validate(dims, task)
                .map_err(|reason| CoreError::Dimension(format!("record {i}: {reason}")))?;
            transposed(&r.continuous, t, &mut m);
            transposed(&r.discrete, t, &mut e);
            p.extend_from_slice(&r.demographics);
            n.extend_from_slice(&r.note);
            match &r.label {
                Label::Binary(v) => targets.push(f64::from(*v)),
                Label::MultiLabel(set) => {
                    let start = targets.len();
                    targets.resize(start + width, 0.0);
                    let share = 1.0 / set.len() as f64;
                    for c in set {
                        targets[start + c] = share;
                    }
                }
            }
        }
        Ok(Self {
            continuous: Tensor::new(vec![b, t, dims.continuous], m)?,
            discrete: Tensor::new(vec![b, t, dims.discrete], e)?,
            demographics: Tensor::new(vec![b, dims.demographics], p)?,
            note: Tensor::new(vec![b, dims.note], n)?,
            targets: Tensor::new(vec![b, width], targets)?,
            labels: records.iter().map(|r| r.label.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Shuffled mini-batch index lists covering `0..n`; the last batch may be
/// short.
pub fn shuffled_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Splits `records` into consecutive batches of at most `batch_size`.
pub fn sequential_batches(
    records: &[PatientRecord],
    batch_size: usize,
    dims: &Dims,
    task: TaskKind,
) -> Result<Vec<Batch>> {
    records
        .chunks(batch_size.max(1))
        .map(|chunk| Batch::new(chunk, dims, task))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_time_major() {
        let dims = Dims {
            continuous: 2,
            discrete: 1,
            demographics: 1,
            note: 1,
            steps: 3,
        };
        let r = PatientRecord {
            continuous: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            discrete: vec![vec![0.0, 1.0, 0.0]],
            demographics: vec![7.0],
            note: vec![8.0],
            label: Label::MultiLabel(vec![0, 2]),
        };
        let b = Batch::new(&[r], &dims, TaskKind::MultiLabel { classes: 4 }).unwrap();
        assert_eq!(b.continuous.shape(), &[1, 3, 2]);
        assert_eq!(b.continuous.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(b.targets.data(), &[0.5, 0.0, 0.5, 0.0]);
    }
}
