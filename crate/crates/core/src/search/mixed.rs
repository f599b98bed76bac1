use mmnas_autodiff::{softmax_slice, Graph, Param, Var};

use crate::error::{CoreError, Result};

/// One candidate operation on a mixed edge.
pub trait Candidate: Clone {
    fn name(&self) -> &'static str;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

/// Object-safe view of a mixed edge used by discretizers.
pub trait Edge {
    fn logits(&self) -> &Param;
    fn logits_mut(&mut self) -> &mut Param;
    /// Which candidates are still in play, by original index.
    fn alive(&self) -> &[bool];
    fn set_alive(&mut self, index: usize, alive: bool) -> Result<()>;
    fn candidate_names(&self) -> Vec<&'static str>;

    fn len(&self) -> usize {
        self.alive().len()
    }

    fn is_empty(&self) -> bool {
        self.alive().is_empty()
    }

    fn alive_indices(&self) -> Vec<usize> {
        self.alive()
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(i, _)| i)
            .collect()
    }

    fn alive_count(&self) -> usize {
        self.alive().iter().filter(|a| **a).count()
    }

    fn is_resolved(&self) -> bool {
        self.alive_count() == 1
    }

    /// Softmax of the logits restricted to live candidates, zero elsewhere.
    fn weights(&self) -> Vec<f64> {
        let alive = self.alive_indices();
        let logits = self.logits().values();
        let sub: Vec<f64> = alive.iter().map(|i| logits[*i]).collect();
        let mut out = vec![0.0; self.len()];
        for (i, w) in alive.iter().zip(softmax_slice(&sub)) {
            out[*i] = w;
        }
        out
    }

    /// Live candidate with the largest weight; ties go to the lower index.
    fn strongest(&self) -> usize {
        let w = self.weights();
        let mut best = self.alive_indices()[0];
        for i in self.alive_indices() {
            if w[i] > w[best] {
                best = i;
            }
        }
        best
    }

    /// Kills every candidate except `index`.
    fn keep_only(&mut self, index: usize) -> Result<()> {
        if index >= self.len() || !self.alive()[index] {
            return Err(CoreError::Precondition(format!(
                "candidate {index} is not alive on this edge"
            )));
        }
        for i in 0..self.len() {
            if i != index {
                self.set_alive(i, false)?;
            }
        }
        Ok(())
    }
}

/// Softmax-weighted combination of candidate operations.
///
/// Candidates removed by a discretizer stay in place (so indices are stable)
/// but are excluded from the softmax. Once a single candidate is left the
/// forward pass is that candidate alone.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedOp<C> {
    logits: Param,
    alive: Vec<bool>,
    candidates: Vec<C>,
}

impl<C: Candidate> MixedOp<C> {
    pub fn new(logits: Param, candidates: Vec<C>) -> Result<Self> {
        if candidates.is_empty() || logits.len() != candidates.len() {
            return Err(CoreError::Config(format!(
                "mixed edge with {} candidates and {} logits",
                candidates.len(),
                logits.len()
            )));
        }
        Ok(Self {
            logits,
            alive: vec![true; candidates.len()],
            candidates,
        })
    }

    pub fn candidates(&self) -> &[C] {
        &self.candidates
    }

    pub fn candidate(&self, index: usize) -> &C {
        &self.candidates[index]
    }

    pub fn candidate_mut(&mut self, index: usize) -> &mut C {
        &mut self.candidates[index]
    }

    /// Runs `run` on every live candidate with non-zero weight and mixes the
    /// results. `run` returns `None` for candidates whose output is exactly
    /// zero; if nothing contributes, a zero tensor of `zero_shape` results.
    pub fn forward<F>(&self, g: &mut Graph, zero_shape: &[usize], mut run: F) -> Result<Var>
    where
        F: FnMut(&mut Graph, &C) -> Result<Option<Var>>,
    {
        let alive = self.alive_indices();
        if alive.len() == 1 {
            return Ok(match run(g, &self.candidates[alive[0]])? {
                Some(v) => v,
                None => g.zeros(zero_shape.to_vec()),
            });
        }
        let logits = g.param(&self.logits);
        let live = if alive.len() == self.candidates.len() {
            logits
        } else {
            g.gather_last(logits, &alive)?
        };
        let weights = g.softmax(live, 0)?;
        let values = g.value(weights).data().to_vec();
        let mut terms = Vec::with_capacity(alive.len());
        for (k, j) in alive.iter().enumerate() {
            if values[k] == 0.0 {
                continue;
            }
            if let Some(out) = run(g, &self.candidates[*j])? {
                terms.push(g.scale(out, weights, k)?);
            }
        }
        if terms.is_empty() {
            return Ok(g.zeros(zero_shape.to_vec()));
        }
        Ok(g.add_all(&terms)?)
    }

    /// Weight parameters of all candidates (live or not).
    pub fn weight_params(&self) -> Vec<&Param> {
        self.candidates.iter().flat_map(Candidate::params).collect()
    }

    pub fn weight_params_mut(&mut self) -> Vec<&mut Param> {
        self.candidates.iter_mut().flat_map(Candidate::params_mut).collect()
    }

    /// Logits followed by candidate weights.
    pub fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.logits).chain(self.weight_params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.logits];
        out.extend(self.candidates.iter_mut().flat_map(Candidate::params_mut));
        out
    }

    /// Copy holding only the live candidate, with a one-element logit
    /// vector. Requires a resolved edge.
    pub fn materialize(&self) -> Result<Self> {
        let alive = self.alive_indices();
        if alive.len() != 1 {
            return Err(CoreError::Precondition(format!(
                "edge `{}` still has {} live candidates",
                self.logits.name(),
                alive.len()
            )));
        }
        let index = alive[0];
        let t = mmnas_autodiff::Tensor::new(vec![1], vec![self.logits.values()[index]])?;
        let logits = Param::new(self.logits.id(), self.logits.name(), self.logits.kind(), t);
        Ok(Self {
            logits,
            alive: vec![true],
            candidates: vec![self.candidates[index].clone()],
        })
    }
}

impl<C: Candidate> Edge for MixedOp<C> {
    fn logits(&self) -> &Param {
        &self.logits
    }

    fn logits_mut(&mut self) -> &mut Param {
        &mut self.logits
    }

    fn alive(&self) -> &[bool] {
        &self.alive
    }

    fn set_alive(&mut self, index: usize, alive: bool) -> Result<()> {
        if index >= self.alive.len() {
            return Err(CoreError::Precondition(format!(
                "candidate {index} out of range for edge `{}`",
                self.logits.name()
            )));
        }
        if !alive && self.alive[index] && self.alive_count() == 1 {
            return Err(CoreError::Precondition(format!(
                "cannot remove the last candidate of edge `{}`",
                self.logits.name()
            )));
        }
        self.alive[index] = alive;
        Ok(())
    }

    fn candidate_names(&self) -> Vec<&'static str> {
        self.candidates.iter().map(Candidate::name).collect()
    }
}
