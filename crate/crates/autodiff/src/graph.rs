//! Dynamic tape of primitive applications.
//!
//! Each forward call appends a node holding its output value and enough
//! information to run the backward rule. Nodes are appended in evaluation
//! order, so the tape is already topologically sorted and the backward pass
//! simply walks it in reverse.

use std::collections::BTreeMap;

use crate::error::{AutodiffError, Result};
use crate::param::{Param, ParamId};
use crate::tensor::{split_axis, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf {
        param: Option<ParamId>,
    },
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale {
        x: Var,
        s: Var,
        index: usize,
    },
    DivBy {
        x: Var,
        s: Var,
    },
    Affine {
        x: Var,
        scale: f64,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Ln(Var),
    LnClamped {
        x: Var,
        floor: f64,
    },
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Select {
        x: Var,
        axis: usize,
        index: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Gather {
        x: Var,
        indices: Vec<usize>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    MaxAxis {
        x: Var,
        axis: usize,
        argmax: Vec<usize>,
    },
    SumAxis {
        x: Var,
        axis: usize,
    },
    SumAll(Var),
    MeanAll(Var),
    Conv1d {
        x: Var,
        w: Var,
    },
    CrossEntropy {
        probs: Var,
        targets: Var,
    },
    BinaryCrossEntropy {
        probs: Var,
        targets: Var,
    },
    BceWithLogits {
        logits: Var,
        targets: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Var,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) needs_grad: bool,
}

/// Reverse-mode tape. Build one per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

/// Result of a backward pass: per-node gradients plus per-parameter sums.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    /// Gradient with respect to a node, if any flowed into it.
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.nodes.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(&id).map(Vec::as_slice)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.params.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Adds this pass's gradient for `param` into its gradient buffer.
    pub fn accumulate_into(&self, param: &mut Param) -> Result<()> {
        if let Some(g) = self.params.get(&param.id()) {
            param.tensor_mut().accumulate_grad(g)?;
        }
        Ok(())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub(crate) fn data(&self, var: Var) -> &[f64] {
        self.nodes[var.0].value.data()
    }

    pub(crate) fn needs_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    pub(crate) fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        let needs_grad = operands(&op).iter().any(|v| self.needs_grad(*v));
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_leaf(&mut self, value: Tensor, param: Option<ParamId>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf { param },
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a parameter; its gradient is reported under the
    /// parameter's id when the parameter requires grad.
    pub fn param(&mut self, p: &Param) -> Var {
        let track = p.tensor().requires_grad();
        let value = Tensor::from_parts(p.tensor().shape().to_vec(), p.values().to_vec());
        self.push_leaf(value, track.then_some(p.id()), track)
    }

    /// Differentiable leaf not tied to a parameter (used for checks).
    pub fn input(&mut self, t: Tensor) -> Var {
        let value = Tensor::from_parts(t.shape().to_vec(), t.into_data());
        self.push_leaf(value, None, true)
    }

    /// Non-differentiable leaf (data, targets).
    pub fn constant(&mut self, t: Tensor) -> Var {
        let value = Tensor::from_parts(t.shape().to_vec(), t.into_data());
        self.push_leaf(value, None, false)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        self.push_leaf(Tensor::zeros(shape), None, false)
    }

    /// Backpropagates from a single-valued root with seed gradient 1.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let shape = self.shape(root).to_vec();
        if self.value(root).len() != 1 {
            return Err(AutodiffError::NonScalarRoot { shape });
        }
        self.backward_with(root, &Tensor::from_parts(shape, vec![1.0]))
    }

    /// Backpropagates an arbitrary upstream gradient from `root`.
    pub fn backward_with(&self, root: Var, upstream: &Tensor) -> Result<Gradients> {
        if upstream.shape() != self.shape(root) {
            return Err(AutodiffError::Shape {
                op: "backward",
                lhs: self.shape(root).to_vec(),
                rhs: upstream.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(upstream.data().to_vec());
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if self.nodes[idx].needs_grad {
                self.backward_node(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        let mut params: BTreeMap<ParamId, Vec<f64>> = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            if let (Op::Leaf { param: Some(id) }, Some(g)) = (&node.op, &grads[idx]) {
                match params.get_mut(id) {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    None => {
                        params.insert(*id, g.clone());
                    }
                }
            }
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.needs_grad(*a) {
                    let bd = self.data(*b);
                    let ga = slot(grads, *a, m * k);
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                ga[i * k + p] += gij * bd[p * n + j];
                            }
                        }
                    }
                }
                if self.needs_grad(*b) {
                    let ad = self.data(*a);
                    let gb = slot(grads, *b, k * n);
                    for i in 0..m {
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let row = &g[i * n..(i + 1) * n];
                            for (dst, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(row) {
                                *dst += aip * gv;
                            }
                        }
                    }
                }
            }
            Op::BatchMatMul { a, b, transpose_b } => {
                let sa = self.shape(*a);
                let (bs, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *transpose_b {
                    self.shape(*b)[1]
                } else {
                    self.shape(*b)[2]
                };
                let (ad, bd) = (self.data(*a), self.data(*b));
                // b element (p, j) of batch t lives at b_at(t, p, j)
                let b_at = |t: usize, p: usize, j: usize| {
                    if *transpose_b {
                        t * n * k + j * k + p
                    } else {
                        t * k * n + p * n + j
                    }
                };
                if self.needs_grad(*a) {
                    let ga = slot(grads, *a, bs * m * k);
                    for t in 0..bs {
                        for i in 0..m {
                            for j in 0..n {
                                let gij = g[t * m * n + i * n + j];
                                for p in 0..k {
                                    ga[t * m * k + i * k + p] += gij * bd[b_at(t, p, j)];
                                }
                            }
                        }
                    }
                }
                if self.needs_grad(*b) {
                    let gb = slot(grads, *b, bs * k * n);
                    for t in 0..bs {
                        for i in 0..m {
                            for j in 0..n {
                                let gij = g[t * m * n + i * n + j];
                                for p in 0..k {
                                    gb[b_at(t, p, j)] += ad[t * m * k + i * k + p] * gij;
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(grads, self, *a, g, 1.0);
                add_into(grads, self, *b, g, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(grads, self, *a, g, 1.0);
                add_into(grads, self, *b, g, -1.0);
            }
            Op::Mul(a, b) => {
                if self.needs_grad(*a) {
                    let bd = self.data(*b);
                    let ga = slot(grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bd[i];
                    }
                }
                if self.needs_grad(*b) {
                    let ad = self.data(*a);
                    let gb = slot(grads, *b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * ad[i];
                    }
                }
            }
            Op::AddBias(x, b) => {
                add_into(grads, self, *x, g, 1.0);
                if self.needs_grad(*b) {
                    let n = self.value(*b).len();
                    let gb = slot(grads, *b, n);
                    for (i, gv) in g.iter().enumerate() {
                        gb[i % n] += gv;
                    }
                }
            }
            Op::Scale { x, s, index } => {
                let sv = self.data(*s)[*index];
                add_into(grads, self, *x, g, sv);
                if self.needs_grad(*s) {
                    let xd = self.data(*x);
                    let dot: f64 = g.iter().zip(xd).map(|(a, b)| a * b).sum();
                    let len = self.value(*s).len();
                    slot(grads, *s, len)[*index] += dot;
                }
            }
            Op::DivBy { x, s } => {
                let sv = self.data(*s)[0];
                add_into(grads, self, *x, g, 1.0 / sv);
                if self.needs_grad(*s) {
                    let xd = self.data(*x);
                    let dot: f64 = g.iter().zip(xd).map(|(a, b)| a * b).sum();
                    slot(grads, *s, 1)[0] -= dot / (sv * sv);
                }
            }
            Op::Affine { x, scale } => add_into(grads, self, *x, g, *scale),
            Op::Relu(x) => {
                let xd = self.data(*x);
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    if xd[i] > 0.0 {
                        gx[i] += g[i];
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }
            Op::Tanh(x) => {
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }
            Op::Ln(x) => {
                let xd = self.data(*x);
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] / xd[i];
                }
            }
            Op::LnClamped { x, floor } => {
                let xd = self.data(*x);
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    if xd[i] > *floor {
                        gx[i] += g[i] / xd[i];
                    }
                }
            }
            Op::Reshape(x) => add_into(grads, self, *x, g, 1.0),
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis).unwrap();
                let mut offset = 0;
                for part in parts {
                    let extent = self.shape(*part)[*axis];
                    if self.needs_grad(*part) {
                        let gp = slot(grads, *part, outer * extent * inner);
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + extent) * inner];
                            let dst = &mut gp[o * extent * inner..(o + 1) * extent * inner];
                            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                        }
                    }
                    offset += extent;
                }
            }
            Op::Select { x, axis, index } => {
                let (outer, extent, inner) = split_axis(self.shape(*x), *axis).unwrap();
                let gx = slot(grads, *x, outer * extent * inner);
                for o in 0..outer {
                    let base = (o * extent + index) * inner;
                    for i in 0..inner {
                        gx[base + i] += g[o * inner + i];
                    }
                }
            }
            Op::Narrow { x, axis, start } => {
                let (outer, extent, inner) = split_axis(self.shape(*x), *axis).unwrap();
                let len = node.value.shape()[*axis];
                let gx = slot(grads, *x, outer * extent * inner);
                for o in 0..outer {
                    for r in 0..len {
                        let src = (o * len + r) * inner;
                        let dst = (o * extent + start + r) * inner;
                        for i in 0..inner {
                            gx[dst + i] += g[src + i];
                        }
                    }
                }
            }
            Op::Gather { x, indices } => {
                let last = *self.shape(*x).last().unwrap();
                let rows = self.value(*x).len() / last;
                let gx = slot(grads, *x, rows * last);
                for r in 0..rows {
                    for (j, &src) in indices.iter().enumerate() {
                        gx[r * last + src] += g[r * indices.len() + j];
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = split_axis(self.shape(*x), *axis).unwrap();
                let gx = slot(grads, *x, outer * n * inner);
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| g[at(j)] * out[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] += out[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            }
            Op::MaxAxis { x, axis, argmax } => {
                let (outer, n, inner) = split_axis(self.shape(*x), *axis).unwrap();
                let gx = slot(grads, *x, outer * n * inner);
                for o in 0..outer {
                    for i in 0..inner {
                        let j = argmax[o * inner + i];
                        gx[(o * n + j) * inner + i] += g[o * inner + i];
                    }
                }
            }
            Op::SumAxis { x, axis } => {
                let (outer, n, inner) = split_axis(self.shape(*x), *axis).unwrap();
                let gx = slot(grads, *x, outer * n * inner);
                for o in 0..outer {
                    for j in 0..n {
                        for i in 0..inner {
                            gx[(o * n + j) * inner + i] += g[o * inner + i];
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                let len = self.value(*x).len();
                let gx = slot(grads, *x, len);
                gx.iter_mut().for_each(|v| *v += g[0]);
            }
            Op::MeanAll(x) => {
                let len = self.value(*x).len();
                let gx = slot(grads, *x, len);
                let share = g[0] / len as f64;
                gx.iter_mut().for_each(|v| *v += share);
            }
            Op::Conv1d { x, w } => {
                let sx = self.shape(*x);
                let (bs, t_len, cin) = (sx[0], sx[1], sx[2]);
                let sw = self.shape(*w);
                let (kw, cout) = (sw[0], sw[2]);
                let pad = (kw - 1) / 2;
                let (xd, wd) = (self.data(*x), self.data(*w));
                let need_x = self.needs_grad(*x);
                let need_w = self.needs_grad(*w);
                let mut gx_buf = vec![0.0; if need_x { xd.len() } else { 0 }];
                let mut gw_buf = vec![0.0; if need_w { wd.len() } else { 0 }];
                for b in 0..bs {
                    for t in 0..t_len {
                        let go = &g[(b * t_len + t) * cout..(b * t_len + t + 1) * cout];
                        for j in 0..kw {
                            let src = t as isize + j as isize - pad as isize;
                            if src < 0 || src >= t_len as isize {
                                continue;
                            }
                            let xrow = (b * t_len + src as usize) * cin;
                            for c in 0..cin {
                                let wrow = (j * cin + c) * cout;
                                if need_x {
                                    let mut acc = 0.0;
                                    for o in 0..cout {
                                        acc += go[o] * wd[wrow + o];
                                    }
                                    gx_buf[xrow + c] += acc;
                                }
                                if need_w {
                                    let xv = xd[xrow + c];
                                    for o in 0..cout {
                                        gw_buf[wrow + o] += xv * go[o];
                                    }
                                }
                            }
                        }
                    }
                }
                if need_x {
                    add_into(grads, self, *x, &gx_buf, 1.0);
                }
                if need_w {
                    add_into(grads, self, *w, &gw_buf, 1.0);
                }
            }
            Op::CrossEntropy { probs, targets } => {
                let rows = self.shape(*probs)[0] as f64;
                let (pd, td) = (self.data(*probs), self.data(*targets));
                let gp = slot(grads, *probs, pd.len());
                for i in 0..pd.len() {
                    if td[i] != 0.0 {
                        gp[i] -= g[0] * td[i] / (pd[i] * rows);
                    }
                }
            }
            Op::BinaryCrossEntropy { probs, targets } => {
                let (pd, td) = (self.data(*probs), self.data(*targets));
                let n = pd.len() as f64;
                let gp = slot(grads, *probs, pd.len());
                for i in 0..pd.len() {
                    let mut d = 0.0;
                    if td[i] != 0.0 {
                        d -= td[i] / pd[i];
                    }
                    if td[i] != 1.0 {
                        d += (1.0 - td[i]) / (1.0 - pd[i]);
                    }
                    gp[i] += g[0] * d / n;
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let (zd, td) = (self.data(*logits), self.data(*targets));
                let n = zd.len() as f64;
                let gz = slot(grads, *logits, zd.len());
                for i in 0..zd.len() {
                    gz[i] += g[0] * (sigmoid(zd[i]) - td[i]) / n;
                }
            }
            Op::SoftmaxCrossEntropy { logits, targets } => {
                let sz = self.shape(*logits);
                let (rows, cols) = (sz[0], sz[1]);
                let (zd, td) = (self.data(*logits), self.data(*targets));
                let gz = slot(grads, *logits, zd.len());
                for r in 0..rows {
                    let row = &zd[r * cols..(r + 1) * cols];
                    let probs = softmax_slice(row);
                    let tsum: f64 = td[r * cols..(r + 1) * cols].iter().sum();
                    for c in 0..cols {
                        gz[r * cols + c] += g[0] * (probs[c] * tsum - td[r * cols + c]) / rows as f64;
                    }
                }
            }
        }
    }
}

fn operands(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf { .. } => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => {
            vec![*a, *b]
        }
        Op::BatchMatMul { a, b, .. } => vec![*a, *b],
        Op::Scale { x, s, .. } | Op::DivBy { x, s } => vec![*x, *s],
        Op::Affine { x, .. }
        | Op::Relu(x)
        | Op::Sigmoid(x)
        | Op::Tanh(x)
        | Op::Ln(x)
        | Op::LnClamped { x, .. }
        | Op::Reshape(x)
        | Op::Select { x, .. }
        | Op::Narrow { x, .. }
        | Op::Gather { x, .. }
        | Op::Softmax { x, .. }
        | Op::MaxAxis { x, .. }
        | Op::SumAxis { x, .. }
        | Op::SumAll(x)
        | Op::MeanAll(x) => vec![*x],
        Op::Concat { parts, .. } => parts.clone(),
        Op::Conv1d { x, w } => vec![*x, *w],
        Op::CrossEntropy { probs, .. } | Op::BinaryCrossEntropy { probs, .. } => vec![*probs],
        Op::BceWithLogits { logits, .. } | Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], var: Var, len: usize) -> &mut Vec<f64> {
    grads[var.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(grads: &mut [Option<Vec<f64>>], graph: &Graph, var: Var, g: &[f64], factor: f64) {
    if !graph.needs_grad(var) {
        return;
    }
    let dst = slot(grads, var, g.len());
    if factor == 1.0 {
        dst.iter_mut().zip(g).for_each(|(d, s)| *d += s);
    } else {
        dst.iter_mut().zip(g).for_each(|(d, s)| *d += factor * s);
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of one slice.
pub fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
