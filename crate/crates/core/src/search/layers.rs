//! Parameterized building blocks shared by the candidate operations.

use mmnas_autodiff::{uniform_fan_in, Graph, Param, ParamId, ParamKind, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

/// Scale of the initial architecture logits.
pub const ARCH_INIT_SCALE: f64 = 1e-3;

/// Hands out parameter ids and initial values from one seeded stream.
pub struct ParamFactory {
    next: ParamId,
    rng: ChaCha8Rng,
}

impl ParamFactory {
    pub fn new(seed: u64) -> Self {
        Self {
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn make(&mut self, name: String, kind: ParamKind, tensor: Tensor) -> Param {
        let id = self.next;
        self.next += 1;
        Param::new(id, name, kind, tensor)
    }

    /// Weight drawn from `U[-1/√fan_in, 1/√fan_in]`.
    pub fn weight(&mut self, name: impl Into<String>, shape: Vec<usize>, fan_in: usize) -> Param {
        let t = uniform_fan_in(&mut self.rng, shape, fan_in);
        self.make(name.into(), ParamKind::Weight, t)
    }

    pub fn bias(&mut self, name: impl Into<String>, len: usize) -> Param {
        self.make(name.into(), ParamKind::Weight, Tensor::zeros(vec![len]))
    }

    pub fn filled(&mut self, name: impl Into<String>, len: usize, value: f64) -> Param {
        let t = Tensor::new(vec![len], vec![value; len]).expect("finite fill value");
        self.make(name.into(), ParamKind::Weight, t)
    }

    /// Architecture logits, small Gaussian perturbations around zero.
    pub fn arch(&mut self, name: impl Into<String>, len: usize) -> Param {
        let values = (0..len)
            .map(|_| ARCH_INIT_SCALE * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        let t = Tensor::new(vec![len], values).expect("finite logits");
        self.make(name.into(), ParamKind::Architecture, t)
    }
}

/// Affine map over the last axis: `x W + b`, `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Dense {
    pub fn new(f: &mut ParamFactory, name: &str, input: usize, output: usize, bias: bool) -> Self {
        Self {
            weight: f.weight(format!("{name}.weight"), vec![input, output], input),
            bias: bias.then(|| f.bias(format!("{name}.bias"), output)),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.weight.tensor().shape()[1]
    }

    /// Applies the map to `[.., in]`, flattening leading axes as needed.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let input = *shape.last().unwrap_or(&0);
        let flat = if shape.len() == 2 {
            x
        } else {
            g.reshape(x, vec![shape.iter().product::<usize>() / input.max(1), input])?
        };
        let w = g.param(&self.weight);
        let mut y = g.matmul(flat, w)?;
        if let Some(b) = &self.bias {
            let b = g.param(b);
            y = g.add_bias(y, b)?;
        }
        if shape.len() == 2 {
            return Ok(y);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.output_dim();
        Ok(g.reshape(y, out_shape)?)
    }

    pub fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(&self.bias).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(&mut self.bias).collect()
    }
}

/// Single-head scaled dot-product attention with bias-free projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
}

impl Attention {
    pub fn new(f: &mut ParamFactory, name: &str, dim: usize) -> Self {
        Self {
            query: Dense::new(f, &format!("{name}.query"), dim, dim, false),
            key: Dense::new(f, &format!("{name}.key"), dim, dim, false),
            value: Dense::new(f, &format!("{name}.value"), dim, dim, false),
        }
    }

    /// Attention weights `softmax(Q Kᵀ / √d)` of shape `[B, Tq, Tk]`.
    pub fn weights(&self, g: &mut Graph, queries: Var, keys: Var) -> Result<Var> {
        let dim = *g.shape(queries).last().unwrap_or(&1);
        let q = self.query.forward(g, queries)?;
        let k = self.key.forward(g, keys)?;
        let scores = g.bmm_nt(q, k)?;
        let scaled = g.affine(scores, 1.0 / (dim as f64).sqrt(), 0.0)?;
        Ok(g.softmax(scaled, 2)?)
    }

    /// `queries: [B, Tq, d]`, `context: [B, Tk, d]` → `[B, Tq, d]`.
    pub fn forward(&self, g: &mut Graph, queries: Var, context: Var) -> Result<Var> {
        let a = self.weights(g, queries, context)?;
        let v = self.value.forward(g, context)?;
        Ok(g.bmm(a, v)?)
    }

    /// Vector query `[B, d]` against a sequence `[B, T, d]`: the
    /// attention-weighted sum of value rows, `[B, d]`.
    pub fn pool(&self, g: &mut Graph, query: Var, context: Var) -> Result<Var> {
        let shape = g.shape(query).to_vec();
        let q = g.reshape(query, vec![shape[0], 1, shape[1]])?;
        let out = self.forward(g, q, context)?;
        Ok(g.reshape(out, shape)?)
    }

    pub fn params(&self) -> Vec<&Param> {
        [&self.query, &self.key, &self.value].into_iter().flat_map(Dense::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        [&mut self.query, &mut self.key, &mut self.value]
            .into_iter()
            .flat_map(Dense::params_mut)
            .collect()
    }
}

/// Gated recurrent unit emitting its hidden state at every step.
///
/// ```text
/// z = σ(x W_z + b_z + h U_z)
/// r = σ(x W_r + b_r + h U_r)
/// ñ = tanh(x W_n + b_n + (r ⊙ h) U_n)
/// h' = (1 - z) ⊙ h + z ⊙ ñ
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub input_update: Dense,
    pub input_reset: Dense,
    pub input_candidate: Dense,
    pub hidden_update: Param,
    pub hidden_reset: Param,
    pub hidden_candidate: Param,
}

impl Gru {
    pub fn new(f: &mut ParamFactory, name: &str, dim: usize) -> Self {
        Self {
            input_update: Dense::new(f, &format!("{name}.input_update"), dim, dim, true),
            input_reset: Dense::new(f, &format!("{name}.input_reset"), dim, dim, true),
            input_candidate: Dense::new(f, &format!("{name}.input_candidate"), dim, dim, true),
            hidden_update: f.weight(format!("{name}.hidden_update"), vec![dim, dim], dim),
            hidden_reset: f.weight(format!("{name}.hidden_reset"), vec![dim, dim], dim),
            hidden_candidate: f.weight(format!("{name}.hidden_candidate"), vec![dim, dim], dim),
        }
    }

    /// `x: [B, T, d]` → hidden states `[B, T, d]`, starting from `h = 0`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let (batch, steps, dim) = (shape[0], shape[1], shape[2]);
        let xz = self.input_update.forward(g, x)?;
        let xr = self.input_reset.forward(g, x)?;
        let xn = self.input_candidate.forward(g, x)?;
        let uz = g.param(&self.hidden_update);
        let ur = g.param(&self.hidden_reset);
        let un = g.param(&self.hidden_candidate);
        let mut h = g.zeros(vec![batch, dim]);
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let hz = g.matmul(h, uz)?;
            let z_in = g.select(xz, 1, t)?;
            let z_pre = g.add(z_in, hz)?;
            let z = g.sigmoid(z_pre)?;
            let hr = g.matmul(h, ur)?;
            let r_in = g.select(xr, 1, t)?;
            let r_pre = g.add(r_in, hr)?;
            let r = g.sigmoid(r_pre)?;
            let rh = g.mul(r, h)?;
            let hn = g.matmul(rh, un)?;
            let n_in = g.select(xn, 1, t)?;
            let n_pre = g.add(n_in, hn)?;
            let n = g.tanh(n_pre)?;
            let keep = g.affine(z, -1.0, 1.0)?;
            let kept = g.mul(keep, h)?;
            let fresh = g.mul(z, n)?;
            h = g.add(kept, fresh)?;
            outputs.push(g.reshape(h, vec![batch, 1, dim])?);
        }
        Ok(g.concat(&outputs, 1)?)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for d in [&self.input_update, &self.input_reset, &self.input_candidate] {
            out.extend(d.params());
        }
        out.extend([&self.hidden_update, &self.hidden_reset, &self.hidden_candidate]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for d in [
            &mut self.input_update,
            &mut self.input_reset,
            &mut self.input_candidate,
        ] {
            out.extend(d.params_mut());
        }
        out.extend([
            &mut self.hidden_update,
            &mut self.hidden_reset,
            &mut self.hidden_candidate,
        ]);
        out
    }
}

/// Width-3 convolution over time with same-length output.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub kernel: Param,
    pub bias: Param,
}

pub const CONV_WIDTH: usize = 3;

impl Conv {
    pub fn new(f: &mut ParamFactory, name: &str, dim: usize) -> Self {
        Self {
            kernel: f.weight(format!("{name}.kernel"), vec![CONV_WIDTH, dim, dim], CONV_WIDTH * dim),
            bias: f.bias(format!("{name}.bias"), dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&self.kernel);
        let y = g.conv1d_same(x, w)?;
        let b = g.param(&self.bias);
        Ok(g.add_bias(y, b)?)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.kernel, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.bias]
    }
}
