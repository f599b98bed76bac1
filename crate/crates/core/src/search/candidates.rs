//! Candidate operations for modality pipelines, feature selectors and fusion
//! nodes.

use mmnas_autodiff::{Graph, Param, Var};

use super::layers::{Attention, Conv, Dense, Gru, ParamFactory};
use super::mixed::Candidate;
use super::space::{FusionOpKind, Modality, SelectorKind, SequentialOpKind, StaticOpKind};
use crate::error::{CoreError, Result};

/// Input embeddings of all four modalities for one batch. Interaction
/// operations read their partner features from here.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    /// `[B, T, d_e]`
    pub continuous: Var,
    /// `[B, T, d_e]`
    pub discrete: Var,
    /// `[B, d_e]`
    pub demographics: Var,
    /// `[B, d_e]`
    pub note: Var,
}

impl Context {
    pub fn embedding(&self, m: Modality) -> Var {
        match m {
            Modality::Continuous => self.continuous,
            Modality::Discrete => self.discrete,
            Modality::Demographics => self.demographics,
            Modality::Note => self.note,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticOp {
    Identity,
    /// `ReLU(x W + b)`
    Linear(Dense),
    /// `[x; x'] W + b` with `x'` the partner static embedding.
    StaticInteraction(Dense),
    /// Attention from `x` over a sequence embedding.
    Attend { source: Modality, attention: Attention },
}

impl StaticOp {
    pub fn new(kind: StaticOpKind, f: &mut ParamFactory, name: &str, dim: usize) -> Self {
        let name = format!("{name}.{kind}");
        match kind {
            StaticOpKind::Identity => StaticOp::Identity,
            StaticOpKind::Linear => StaticOp::Linear(Dense::new(f, &name, dim, dim, true)),
            StaticOpKind::StaticInteraction => {
                StaticOp::StaticInteraction(Dense::new(f, &name, 2 * dim, dim, true))
            }
            StaticOpKind::AttendContinuous => StaticOp::Attend {
                source: Modality::Continuous,
                attention: Attention::new(f, &name, dim),
            },
            StaticOpKind::AttendDiscrete => StaticOp::Attend {
                source: Modality::Discrete,
                attention: Attention::new(f, &name, dim),
            },
        }
    }

    pub fn kind(&self) -> StaticOpKind {
        match self {
            StaticOp::Identity => StaticOpKind::Identity,
            StaticOp::Linear(_) => StaticOpKind::Linear,
            StaticOp::StaticInteraction(_) => StaticOpKind::StaticInteraction,
            StaticOp::Attend {
                source: Modality::Continuous,
                ..
            } => StaticOpKind::AttendContinuous,
            StaticOp::Attend { .. } => StaticOpKind::AttendDiscrete,
        }
    }

    /// `x: [B, d_e]` → `[B, d_e]`.
    pub fn forward(&self, g: &mut Graph, x: Var, own: Modality, ctx: &Context) -> Result<Var> {
        match self {
            StaticOp::Identity => Ok(x),
            StaticOp::Linear(d) => {
                let y = d.forward(g, x)?;
                Ok(g.relu(y)?)
            }
            StaticOp::StaticInteraction(d) => {
                let joined = g.concat(&[x, ctx.embedding(own.partner())], 1)?;
                d.forward(g, joined)
            }
            StaticOp::Attend { source, attention } => attention.pool(g, x, ctx.embedding(*source)),
        }
    }
}

impl Candidate for StaticOp {
    fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            StaticOp::Identity => Vec::new(),
            StaticOp::Linear(d) | StaticOp::StaticInteraction(d) => d.params(),
            StaticOp::Attend { attention, .. } => attention.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            StaticOp::Identity => Vec::new(),
            StaticOp::Linear(d) | StaticOp::StaticInteraction(d) => d.params_mut(),
            StaticOp::Attend { attention, .. } => attention.params_mut(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequentialOp {
    Identity,
    Gru(Gru),
    SelfAttention(Attention),
    Conv(Conv),
    /// Position-wise `x W + b`.
    FeedForward(Dense),
    /// Queries from `x`, keys and values from the partner sequence.
    CrossAttention(Attention),
}

impl SequentialOp {
    pub fn new(kind: SequentialOpKind, f: &mut ParamFactory, name: &str, dim: usize) -> Self {
        let name = format!("{name}.{kind}");
        match kind {
            SequentialOpKind::Identity => SequentialOp::Identity,
            SequentialOpKind::Gru => SequentialOp::Gru(Gru::new(f, &name, dim)),
            SequentialOpKind::SelfAttention => SequentialOp::SelfAttention(Attention::new(f, &name, dim)),
            SequentialOpKind::Conv1d => SequentialOp::Conv(Conv::new(f, &name, dim)),
            SequentialOpKind::FeedForward => SequentialOp::FeedForward(Dense::new(f, &name, dim, dim, true)),
            SequentialOpKind::CrossAttention => {
                SequentialOp::CrossAttention(Attention::new(f, &name, dim))
            }
        }
    }

    pub fn kind(&self) -> SequentialOpKind {
        match self {
            SequentialOp::Identity => SequentialOpKind::Identity,
            SequentialOp::Gru(_) => SequentialOpKind::Gru,
            SequentialOp::SelfAttention(_) => SequentialOpKind::SelfAttention,
            SequentialOp::Conv(_) => SequentialOpKind::Conv1d,
            SequentialOp::FeedForward(_) => SequentialOpKind::FeedForward,
            SequentialOp::CrossAttention(_) => SequentialOpKind::CrossAttention,
        }
    }

    /// `x: [B, T, d_e]` → `[B, T, d_e]`.
    pub fn forward(&self, g: &mut Graph, x: Var, own: Modality, ctx: &Context) -> Result<Var> {
        match self {
            SequentialOp::Identity => Ok(x),
            SequentialOp::Gru(gru) => gru.forward(g, x),
            SequentialOp::SelfAttention(a) => a.forward(g, x, x),
            SequentialOp::Conv(c) => c.forward(g, x),
            SequentialOp::FeedForward(d) => d.forward(g, x),
            SequentialOp::CrossAttention(a) => {
                let other = ctx.embedding(own.partner());
                if g.shape(other)[..2] != g.shape(x)[..2] {
                    return Err(CoreError::Dimension(format!(
                        "cross-attention between sequences of shape {:?} and {:?}",
                        g.shape(x),
                        g.shape(other)
                    )));
                }
                a.forward(g, x, other)
            }
        }
    }
}

impl Candidate for SequentialOp {
    fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            SequentialOp::Identity => Vec::new(),
            SequentialOp::Gru(gru) => gru.params(),
            SequentialOp::SelfAttention(a) | SequentialOp::CrossAttention(a) => a.params(),
            SequentialOp::Conv(c) => c.params(),
            SequentialOp::FeedForward(d) => d.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            SequentialOp::Identity => Vec::new(),
            SequentialOp::Gru(gru) => gru.params_mut(),
            SequentialOp::SelfAttention(a) | SequentialOp::CrossAttention(a) => a.params_mut(),
            SequentialOp::Conv(c) => c.params_mut(),
            SequentialOp::FeedForward(d) => d.params_mut(),
        }
    }
}

/// Feature selector choice: pass the input through or drop it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorOp(pub SelectorKind);

impl Candidate for SelectorOp {
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionOp {
    Sum,
    /// `ReLU((Σ u_i) W + b)`
    Mlp(Dense),
    /// Softmax over per-input scores `u_i w + b`, then weighted sum.
    AttentiveSum(Dense),
}

impl FusionOp {
    pub fn new(kind: FusionOpKind, f: &mut ParamFactory, name: &str, dim: usize) -> Self {
        let name = format!("{name}.{kind}");
        match kind {
            FusionOpKind::Sum => FusionOp::Sum,
            FusionOpKind::Mlp => FusionOp::Mlp(Dense::new(f, &name, dim, dim, true)),
            FusionOpKind::AttentiveSum => FusionOp::AttentiveSum(Dense::new(f, &name, dim, 1, true)),
        }
    }

    pub fn kind(&self) -> FusionOpKind {
        match self {
            FusionOp::Sum => FusionOpKind::Sum,
            FusionOp::Mlp(_) => FusionOpKind::Mlp,
            FusionOp::AttentiveSum(_) => FusionOpKind::AttentiveSum,
        }
    }

    /// Combines a non-empty list of `[B, d_e]` features.
    pub fn forward(&self, g: &mut Graph, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(CoreError::Precondition("fusion over an empty input list".into()));
        }
        match self {
            FusionOp::Sum => Ok(g.add_all(inputs)?),
            FusionOp::Mlp(d) => {
                let s = g.add_all(inputs)?;
                let y = d.forward(g, s)?;
                Ok(g.relu(y)?)
            }
            FusionOp::AttentiveSum(d) => {
                let shape = g.shape(inputs[0]).to_vec();
                let (batch, dim) = (shape[0], shape[1]);
                let rows = inputs
                    .iter()
                    .map(|u| g.reshape(*u, vec![batch, 1, dim]))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let stacked = g.concat(&rows, 1)?;
                let scores = d.forward(g, stacked)?;
                let scores = g.reshape(scores, vec![batch, inputs.len()])?;
                let phi = g.softmax(scores, 1)?;
                let phi = g.reshape(phi, vec![batch, 1, inputs.len()])?;
                let out = g.bmm(phi, stacked)?;
                Ok(g.reshape(out, vec![batch, dim])?)
            }
        }
    }
}

impl Candidate for FusionOp {
    fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            FusionOp::Sum => Vec::new(),
            FusionOp::Mlp(d) | FusionOp::AttentiveSum(d) => d.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            FusionOp::Sum => Vec::new(),
            FusionOp::Mlp(d) | FusionOp::AttentiveSum(d) => d.params_mut(),
        }
    }
}
