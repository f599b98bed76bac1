//! Forward constructors for every primitive. Each returns a new [`Var`]
//! whose backward rule lives in `graph.rs`.

use crate::error::{AutodiffError, Result};
use crate::graph::{sigmoid, softmax_slice, Graph, Op, Var};
use crate::tensor::{numel, split_axis, Tensor};

impl Graph {
    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> AutodiffError {
        AutodiffError::Shape {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    fn axis_parts(&self, op: &'static str, x: Var, axis: usize) -> Result<(usize, usize, usize)> {
        split_axis(self.shape(x), axis).ok_or_else(|| AutodiffError::Axis {
            op,
            axis,
            shape: self.shape(x).to_vec(),
        })
    }

    /// `[m, k] · [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    /// Batched product `[B, m, k] · [B, k, n] -> [B, m, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        self.batch_matmul(a, b, false)
    }

    /// Batched product against transposed right operand:
    /// `[B, m, k] · [B, n, k]ᵀ -> [B, m, n]`.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.batch_matmul(a, b, true)
    }

    fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(self.shape_err("bmm", a, b));
        }
        let (bs, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if transpose_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(self.shape_err("bmm", a, b));
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; bs * m * n];
        for t in 0..bs {
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0;
                    for p in 0..k {
                        let bv = if transpose_b {
                            bd[t * n * k + j * k + p]
                        } else {
                            bd[t * k * n + p * n + j]
                        };
                        acc += ad[t * m * k + i * k + p] * bv;
                    }
                    out[t * m * n + i * n + j] = acc;
                }
            }
        }
        self.push(
            "bmm",
            Tensor::from_parts(vec![bs, m, n], out),
            Op::BatchMatMul { a, b, transpose_b },
        )
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(name, a, b));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(name, Tensor::from_parts(shape, out), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Left fold of [`Graph::add`] over a non-empty list.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let (first, rest) = xs
            .split_first()
            .ok_or_else(|| AutodiffError::Invalid("add_all of an empty list".into()))?;
        let mut acc = *first;
        for x in rest {
            acc = self.add(acc, *x)?;
        }
        Ok(acc)
    }

    /// Adds `bias` (shape `[n]`) to every length-`n` row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(self.shape_err("add_bias", x, bias));
        }
        let n = sb[0];
        let bd = self.data(bias);
        let out = self.data(x).iter().enumerate().map(|(i, v)| v + bd[i % n]).collect();
        let shape = sx.to_vec();
        self.push("add_bias", Tensor::from_parts(shape, out), Op::AddBias(x, bias))
    }

    /// Multiplies every element of `x` by the single element `s[index]`.
    pub fn scale(&mut self, x: Var, s: Var, index: usize) -> Result<Var> {
        let Some(&sv) = self.data(s).get(index) else {
            return Err(self.shape_err("scale", x, s));
        };
        let out = self.data(x).iter().map(|v| v * sv).collect();
        let shape = self.shape(x).to_vec();
        self.push("scale", Tensor::from_parts(shape, out), Op::Scale { x, s, index })
    }

    /// Divides every element of `x` by the single-valued `s`.
    pub fn div_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(self.shape_err("div_by", x, s));
        }
        let sv = self.data(s)[0];
        if sv == 0.0 {
            return Err(AutodiffError::Domain {
                op: "div_by",
                value: sv,
            });
        }
        let out = self.data(x).iter().map(|v| v / sv).collect();
        let shape = self.shape(x).to_vec();
        self.push("div_by", Tensor::from_parts(shape, out), Op::DivBy { x, s })
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.data(x).iter().map(|v| scale * v + shift).collect();
        let shape = self.shape(x).to_vec();
        self.push("affine", Tensor::from_parts(shape, out), Op::Affine { x, scale })
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.data(x).iter().map(|v| f(*v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(name, Tensor::from_parts(shape, out), op)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f64::tanh, Op::Tanh(x))
    }

    /// Natural log; non-positive inputs are a domain error.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.data(x).iter().find(|v| **v <= 0.0) {
            return Err(AutodiffError::Domain { op: "ln", value: *bad });
        }
        self.unary("ln", x, f64::ln, Op::Ln(x))
    }

    /// `ln(max(x, floor))`; zero gradient below the floor.
    pub fn ln_clamped(&mut self, x: Var, floor: f64) -> Result<Var> {
        self.unary("ln_clamped", x, |v| v.max(floor).ln(), Op::LnClamped { x, floor })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != self.value(x).len() {
            return Err(AutodiffError::Shape {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        let data = self.data(x).to_vec();
        self.push("reshape", Tensor::from_parts(shape, data), Op::Reshape(x))
    }

    /// Concatenates tensors that agree on every extent except `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| AutodiffError::Invalid("concat of an empty list".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(AutodiffError::Axis {
                op: "concat",
                axis,
                shape: base,
            });
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(self.shape_err("concat", first, *p));
            }
            total += s[axis];
        }
        let outer = numel(&base[..axis]);
        let inner = numel(&base[axis + 1..]);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let extent = self.shape(*p)[axis];
                out.extend_from_slice(&self.data(*p)[o * extent * inner..(o + 1) * extent * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(
            "concat",
            Tensor::from_parts(shape, out),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        )
    }

    /// Picks position `index` along `axis`, dropping that axis.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let (outer, extent, inner) = self.axis_parts("select", x, axis)?;
        if index >= extent {
            return Err(AutodiffError::Axis {
                op: "select",
                axis,
                shape: self.shape(x).to_vec(),
            });
        }
        let xd = self.data(x);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * extent + index) * inner;
            out.extend_from_slice(&xd[base..base + inner]);
        }
        let mut shape = self.shape(x).to_vec();
        shape.remove(axis);
        self.push("select", Tensor::from_parts(shape, out), Op::Select { x, axis, index })
    }

    /// Keeps positions `start..start+len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (outer, extent, inner) = self.axis_parts("narrow", x, axis)?;
        if start + len > extent || len == 0 {
            return Err(AutodiffError::Axis {
                op: "narrow",
                axis,
                shape: self.shape(x).to_vec(),
            });
        }
        let xd = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&xd[base..base + len * inner]);
        }
        let mut shape = self.shape(x).to_vec();
        shape[axis] = len;
        self.push("narrow", Tensor::from_parts(shape, out), Op::Narrow { x, axis, start })
    }

    /// Picks the given positions along the last axis.
    pub fn gather_last(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let Some(&last) = shape.last() else {
            return Err(AutodiffError::EmptyAxis { op: "gather", shape });
        };
        if indices.is_empty() || indices.iter().any(|i| *i >= last) {
            return Err(AutodiffError::Axis {
                op: "gather",
                axis: shape.len() - 1,
                shape,
            });
        }
        let rows = self.value(x).len() / last.max(1);
        let xd = self.data(x);
        let mut out = Vec::with_capacity(rows * indices.len());
        for r in 0..rows {
            out.extend(indices.iter().map(|&i| xd[r * last + i]));
        }
        let mut new_shape = shape;
        *new_shape.last_mut().unwrap() = indices.len();
        self.push(
            "gather",
            Tensor::from_parts(new_shape, out),
            Op::Gather {
                x,
                indices: indices.to_vec(),
            },
        )
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = self.axis_parts("softmax", x, axis)?;
        if n == 0 {
            return Err(AutodiffError::EmptyAxis {
                op: "softmax",
                shape: self.shape(x).to_vec(),
            });
        }
        let xd = self.data(x);
        let mut out = vec![0.0; xd.len()];
        let mut col = vec![0.0; n];
        for o in 0..outer {
            for i in 0..inner {
                for (j, c) in col.iter_mut().enumerate() {
                    *c = xd[(o * n + j) * inner + i];
                }
                for (j, p) in softmax_slice(&col).into_iter().enumerate() {
                    out[(o * n + j) * inner + i] = p;
                }
            }
        }
        let shape = self.shape(x).to_vec();
        self.push("softmax", Tensor::from_parts(shape, out), Op::Softmax { x, axis })
    }

    /// Maximum along `axis` (dropping it). Gradient flows to the first
    /// maximal position.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = self.axis_parts("max_axis", x, axis)?;
        if n == 0 {
            return Err(AutodiffError::EmptyAxis {
                op: "max_axis",
                shape: self.shape(x).to_vec(),
            });
        }
        let xd = self.data(x);
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0;
                for j in 1..n {
                    if xd[(o * n + j) * inner + i] > xd[(o * n + best) * inner + i] {
                        best = j;
                    }
                }
                argmax.push(best);
                out.push(xd[(o * n + best) * inner + i]);
            }
        }
        let mut shape = self.shape(x).to_vec();
        shape.remove(axis);
        self.push("max_axis", Tensor::from_parts(shape, out), Op::MaxAxis { x, axis, argmax })
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = self.axis_parts("sum_axis", x, axis)?;
        let xd = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    out[o * inner + i] += xd[(o * n + j) * inner + i];
                }
            }
        }
        let mut shape = self.shape(x).to_vec();
        shape.remove(axis);
        self.push("sum_axis", Tensor::from_parts(shape, out), Op::SumAxis { x, axis })
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum();
        self.push("sum_all", Tensor::from_parts(vec![1], vec![s]), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let len = self.value(x).len();
        if len == 0 {
            return Err(AutodiffError::EmptyAxis {
                op: "mean_all",
                shape: self.shape(x).to_vec(),
            });
        }
        let s: f64 = self.data(x).iter().sum();
        self.push("mean_all", Tensor::from_parts(vec![1], vec![s / len as f64]), Op::MeanAll(x))
    }

    /// 1-D convolution over the time axis with "same" zero padding.
    ///
    /// `x: [B, T, C_in]`, `w: [K, C_in, C_out]` → `[B, T, C_out]`. Output
    /// position `t` reads inputs `t - (K-1)/2 .. t - (K-1)/2 + K`.
    pub fn conv1d_same(&mut self, x: Var, w: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] || sw[0] == 0 {
            return Err(self.shape_err("conv1d", x, w));
        }
        let (bs, t_len, cin) = (sx[0], sx[1], sx[2]);
        let (kw, cout) = (sw[0], sw[2]);
        let pad = (kw - 1) / 2;
        let (xd, wd) = (self.data(x), self.data(w));
        let mut out = vec![0.0; bs * t_len * cout];
        for b in 0..bs {
            for t in 0..t_len {
                let dst = &mut out[(b * t_len + t) * cout..(b * t_len + t + 1) * cout];
                for j in 0..kw {
                    let src = t as isize + j as isize - pad as isize;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    let xrow = &xd[(b * t_len + src as usize) * cin..(b * t_len + src as usize + 1) * cin];
                    for (c, xv) in xrow.iter().enumerate() {
                        let wrow = &wd[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                        for (d, wv) in dst.iter_mut().zip(wrow) {
                            *d += xv * wv;
                        }
                    }
                }
            }
        }
        self.push("conv1d", Tensor::from_parts(vec![bs, t_len, cout], out), Op::Conv1d { x, w })
    }

    /// Mean over rows of `-Σ_j t_j ln p_j` for `[B, P]` probabilities.
    pub fn cross_entropy(&mut self, probs: Var, targets: Var) -> Result<Var> {
        if self.shape(probs) != self.shape(targets) || self.shape(probs).len() != 2 {
            return Err(self.shape_err("cross_entropy", probs, targets));
        }
        let rows = self.shape(probs)[0] as f64;
        let (pd, td) = (self.data(probs), self.data(targets));
        let mut total = 0.0;
        for (p, t) in pd.iter().zip(td) {
            if *t != 0.0 {
                if *p <= 0.0 {
                    return Err(AutodiffError::Domain {
                        op: "cross_entropy",
                        value: *p,
                    });
                }
                total -= t * p.ln();
            }
        }
        self.push(
            "cross_entropy",
            Tensor::from_parts(vec![1], vec![total / rows]),
            Op::CrossEntropy { probs, targets },
        )
    }

    /// Mean binary cross-entropy between probabilities and targets.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: Var) -> Result<Var> {
        if self.shape(probs) != self.shape(targets) {
            return Err(self.shape_err("binary_cross_entropy", probs, targets));
        }
        let (pd, td) = (self.data(probs), self.data(targets));
        let mut total = 0.0;
        for (p, t) in pd.iter().zip(td) {
            if *t != 0.0 {
                if *p <= 0.0 {
                    return Err(AutodiffError::Domain {
                        op: "binary_cross_entropy",
                        value: *p,
                    });
                }
                total -= t * p.ln();
            }
            if *t != 1.0 {
                if *p >= 1.0 {
                    return Err(AutodiffError::Domain {
                        op: "binary_cross_entropy",
                        value: 1.0 - p,
                    });
                }
                total -= (1.0 - t) * (1.0 - p).ln();
            }
        }
        let n = pd.len() as f64;
        self.push(
            "binary_cross_entropy",
            Tensor::from_parts(vec![1], vec![total / n]),
            Op::BinaryCrossEntropy { probs, targets },
        )
    }

    /// Numerically stable `binary_cross_entropy(sigmoid(z), t)`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        if self.shape(logits) != self.shape(targets) {
            return Err(self.shape_err("bce_with_logits", logits, targets));
        }
        let (zd, td) = (self.data(logits), self.data(targets));
        let total: f64 = zd
            .iter()
            .zip(td)
            .map(|(z, t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum();
        let n = zd.len() as f64;
        self.push(
            "bce_with_logits",
            Tensor::from_parts(vec![1], vec![total / n]),
            Op::BceWithLogits { logits, targets },
        )
    }

    /// Numerically stable `cross_entropy(softmax(z, 1), t)` for `[B, P]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Var) -> Result<Var> {
        if self.shape(logits) != self.shape(targets) || self.shape(logits).len() != 2 {
            return Err(self.shape_err("softmax_cross_entropy", logits, targets));
        }
        let (rows, cols) = (self.shape(logits)[0], self.shape(logits)[1]);
        let (zd, td) = (self.data(logits), self.data(targets));
        let mut total = 0.0;
        for r in 0..rows {
            let row = &zd[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..cols {
                total -= td[r * cols + c] * (row[c] - lse);
            }
        }
        self.push(
            "softmax_cross_entropy",
            Tensor::from_parts(vec![1], vec![total / rows as f64]),
            Op::SoftmaxCrossEntropy { logits, targets },
        )
    }
}
