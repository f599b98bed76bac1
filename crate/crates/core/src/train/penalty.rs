//! Diversity penalty over the per-node modality selections.
//!
//! For node `c`, `q_c` is the vector of Identity probabilities of the
//! selectors on the four modality inputs, normalized to sum to one (uniform
//! if all four are zero). The penalty is `-Σ_{c₁,c₂} CE(q_{c₁}, q_{c₂})`
//! over all ordered pairs including `c₁ = c₂`; adding it to the validation
//! loss pushes nodes towards different modality subsets.

use mmnas_autodiff::{Graph, Tensor, Var};

use crate::error::Result;
use crate::search::{Edge, Supernet};

/// Floor applied inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

const SLOTS: usize = 4;

/// `q_c` for node `node`.
pub fn selector_distribution(net: &Supernet, node: usize) -> [f64; SLOTS] {
    let selectors = &net.nodes()[node].selectors;
    let mut q = [0.0; SLOTS];
    for (slot, sel) in q.iter_mut().zip(selectors) {
        *slot = sel.weights()[0];
    }
    normalize(q)
}

fn normalize(mut q: [f64; SLOTS]) -> [f64; SLOTS] {
    let total: f64 = q.iter().sum();
    if total == 0.0 {
        return [1.0 / SLOTS as f64; SLOTS];
    }
    for v in &mut q {
        *v /= total;
    }
    q
}

pub fn selector_distributions(net: &Supernet) -> Vec<[f64; SLOTS]> {
    (0..net.nodes().len()).map(|c| selector_distribution(net, c)).collect()
}

/// `CE(p, q) = -Σ p_i ln max(q_i, floor)`.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> f64 {
    -p.iter().zip(q).map(|(a, b)| a * b.max(LOG_FLOOR).ln()).sum::<f64>()
}

/// Penalty value from precomputed distributions.
pub fn penalty_value(dists: &[[f64; SLOTS]]) -> f64 {
    let mut total = 0.0;
    for p in dists {
        for q in dists {
            total -= cross_entropy(p, q);
        }
    }
    total
}

/// Mean cross-entropy over ordered pairs of distinct nodes; 0 for a single
/// node.
pub fn mean_pairwise_cross_entropy(dists: &[[f64; SLOTS]]) -> f64 {
    let c = dists.len();
    if c < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, p) in dists.iter().enumerate() {
        for (j, q) in dists.iter().enumerate() {
            if i != j {
                total += cross_entropy(p, q);
            }
        }
    }
    total / (c * (c - 1)) as f64
}

fn distribution_var(g: &mut Graph, net: &Supernet, node: usize) -> Result<Var> {
    let selectors = &net.nodes()[node].selectors;
    let mut slots = Vec::with_capacity(SLOTS);
    for sel in selectors.iter().take(SLOTS) {
        let v = if sel.is_resolved() {
            g.constant(Tensor::vector(vec![sel.weights()[0]])?)
        } else {
            let logits = g.param(sel.logits());
            let w = g.softmax(logits, 0)?;
            g.gather_last(w, &[0])?
        };
        slots.push(v);
    }
    let stacked = g.concat(&slots, 0)?;
    let total = g.sum_all(stacked)?;
    if g.value(total).data()[0] == 0.0 {
        return Ok(g.constant(Tensor::vector(vec![1.0 / SLOTS as f64; SLOTS])?));
    }
    Ok(g.div_by(stacked, total)?)
}

/// Differentiable penalty on `g`; gradients flow into the selector logits.
pub fn penalty(g: &mut Graph, net: &Supernet) -> Result<Var> {
    let qs = (0..net.nodes().len())
        .map(|c| distribution_var(g, net, c))
        .collect::<Result<Vec<_>>>()?;
    let mut logs = Vec::with_capacity(qs.len());
    for q in &qs {
        logs.push(g.ln_clamped(*q, LOG_FLOOR)?);
    }
    let mut terms = Vec::with_capacity(qs.len() * qs.len());
    for p in &qs {
        for lq in &logs {
            let prod = g.mul(*p, *lq)?;
            terms.push(g.sum_all(prod)?);
        }
    }
    Ok(g.add_all(&terms)?)
}
