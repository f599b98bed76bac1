use rand::Rng;

use crate::tensor::{numel, Tensor};

pub type ParamId = usize;

/// Which optimizer a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    /// Ordinary network weights.
    Weight,
    /// Architecture logits over candidate operations.
    Architecture,
}

/// A named trainable tensor with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    id: ParamId,
    name: String,
    kind: ParamKind,
    tensor: Tensor,
}

impl Param {
    pub fn new(id: ParamId, name: impl Into<String>, kind: ParamKind, tensor: Tensor) -> Self {
        Self {
            id,
            name: name.into(),
            kind,
            tensor: tensor.with_requires_grad(true),
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.tensor
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn len(&self) -> usize {
        self.tensor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensor.is_empty()
    }
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_fan_in<R: Rng + ?Sized>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = numel(&shape);
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_parts(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fan_in_bounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = uniform_fan_in(&mut rng, vec![16, 4], 16);
        assert!(t.data().iter().all(|v| v.abs() <= 0.25));
        assert!(t.data().iter().any(|v| *v != 0.0));
    }
}
