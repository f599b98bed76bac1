use std::fmt;

use mmnas_autodiff::{Graph, Param, ParamKind, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::candidates::{Context, FusionOp, SelectorOp, SequentialOp, StaticOp};
use super::layers::{Dense, ParamFactory};
use super::mixed::{Edge, MixedOp};
use super::space::{Modality, SearchSpace, SelectorKind};
use crate::data::{Batch, Dims, TaskKind};
use crate::error::{CoreError, Result};

/// Address of one mixed edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "edge", rename_all = "kebab-case")]
pub enum EdgeId {
    Modality { modality: Modality, layer: usize },
    /// Selector for input `input` of node `node`; inputs are ordered
    /// `[z₁, z₂, z₃, z₄, g₁, .., g_{node}]`.
    Selector { node: usize, input: usize },
    Fusion { node: usize },
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeId::Modality { modality, layer } => write!(f, "{modality}[{layer}]"),
            EdgeId::Selector { node, input } => write!(f, "node{node}.select[{input}]"),
            EdgeId::Fusion { node } => write!(f, "node{node}.fusion"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    Static {
        modality: Modality,
        layers: Vec<MixedOp<StaticOp>>,
    },
    Sequential {
        modality: Modality,
        layers: Vec<MixedOp<SequentialOp>>,
    },
}

impl Pipeline {
    pub fn modality(&self) -> Modality {
        match self {
            Pipeline::Static { modality, .. } | Pipeline::Sequential { modality, .. } => *modality,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Pipeline::Static { layers, .. } => layers.len(),
            Pipeline::Sequential { layers, .. } => layers.len(),
        }
    }

    pub fn edge(&self, layer: usize) -> Option<&dyn Edge> {
        match self {
            Pipeline::Static { layers, .. } => layers.get(layer).map(|l| l as &dyn Edge),
            Pipeline::Sequential { layers, .. } => layers.get(layer).map(|l| l as &dyn Edge),
        }
    }

    pub fn edge_mut(&mut self, layer: usize) -> Option<&mut dyn Edge> {
        match self {
            Pipeline::Static { layers, .. } => layers.get_mut(layer).map(|l| l as &mut dyn Edge),
            Pipeline::Sequential { layers, .. } => layers.get_mut(layer).map(|l| l as &mut dyn Edge),
        }
    }

    /// Runs the K mixed layers from the modality's embedding; sequences are
    /// max-pooled over time at the end. Returns `[B, d_e]`.
    pub fn forward(&self, g: &mut Graph, ctx: &Context) -> Result<Var> {
        let modality = self.modality();
        let mut x = ctx.embedding(modality);
        let shape = g.shape(x).to_vec();
        match self {
            Pipeline::Static { layers, .. } => {
                for layer in layers {
                    let input = x;
                    x = layer.forward(g, &shape, |g, op| op.forward(g, input, modality, ctx).map(Some))?;
                }
                Ok(x)
            }
            Pipeline::Sequential { layers, .. } => {
                for layer in layers {
                    let input = x;
                    x = layer.forward(g, &shape, |g, op| op.forward(g, input, modality, ctx).map(Some))?;
                }
                Ok(g.max_axis(x, 1)?)
            }
        }
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            Pipeline::Static { layers, .. } => layers.iter().flat_map(MixedOp::params).collect(),
            Pipeline::Sequential { layers, .. } => layers.iter().flat_map(MixedOp::params).collect(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Pipeline::Static { layers, .. } => layers.iter_mut().flat_map(MixedOp::params_mut).collect(),
            Pipeline::Sequential { layers, .. } => {
                layers.iter_mut().flat_map(MixedOp::params_mut).collect()
            }
        }
    }
}

/// Fusion step node: one selector per input plus the fusion mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNode {
    pub selectors: Vec<MixedOp<SelectorOp>>,
    pub fusion: MixedOp<FusionOp>,
}

impl FusionNode {
    /// `inputs` must be `[z₁..z₄, g₁..g_{c-1}]`.
    pub fn forward(&self, g: &mut Graph, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != self.selectors.len() {
            return Err(CoreError::Dimension(format!(
                "fusion node expects {} inputs, got {}",
                self.selectors.len(),
                inputs.len()
            )));
        }
        let shape = g.shape(inputs[0]).to_vec();
        let mut selected = Vec::with_capacity(inputs.len());
        for (sel, input) in self.selectors.iter().zip(inputs) {
            let u = sel.forward(g, &shape, |_, op| {
                Ok(match op.0 {
                    SelectorKind::Identity => Some(*input),
                    SelectorKind::Zero => None,
                })
            })?;
            selected.push(u);
        }
        self.fusion
            .forward(g, &shape, |g, op| op.forward(g, &selected).map(Some))
    }
}

/// `h = Σ_c w_c g_c`, then an affine map to the task outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub node_weights: Param,
    pub output: Dense,
}

/// Architecture logits grouped by edge family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    /// `[pipeline][layer][candidate]`
    pub alpha: Vec<Vec<Vec<f64>>>,
    /// `[node][input]` pairs of (Identity, Zero) logits.
    pub beta: Vec<Vec<[f64; 2]>>,
    /// `[node][fusion candidate]`
    pub gamma: Vec<Vec<f64>>,
}

/// Symbolic outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[B, 1]` for binary tasks, `[B, P]` for multi-label.
    pub logits: Var,
    /// Pooled modality encodings z₁..z₄.
    pub encodings: Vec<Var>,
    /// Node features g₁..g_C.
    pub nodes: Vec<Var>,
}

/// Every candidate on every edge, combined by architecture weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Supernet {
    space: SearchSpace,
    dims: Dims,
    task: TaskKind,
    embeddings: Vec<Dense>,
    pipelines: Vec<Pipeline>,
    nodes: Vec<FusionNode>,
    head: Head,
}

impl Supernet {
    pub fn new(space: SearchSpace, dims: Dims, task: TaskKind, seed: u64) -> Result<Self> {
        space.validate()?;
        dims.validate()?;
        if task.outputs() == 0 {
            return Err(CoreError::Config("task needs at least one output".into()));
        }
        let mut f = ParamFactory::new(seed);
        let de = space.embed_dim;
        let inputs = [dims.continuous, dims.discrete, dims.demographics, dims.note];
        let embeddings = Modality::ALL
            .iter()
            .zip(inputs)
            .map(|(m, d)| Dense::new(&mut f, &format!("embed.{m}"), d, de, true))
            .collect();

        let mut pipelines = Vec::with_capacity(4);
        for m in Modality::ALL {
            let pipeline = if m.is_sequential() {
                let mut layers = Vec::with_capacity(space.layers);
                for k in 0..space.layers {
                    let name = format!("{m}.layer{k}");
                    let logits = f.arch(format!("{name}.arch"), space.sequential_ops.len());
                    let ops = space
                        .sequential_ops
                        .iter()
                        .map(|kind| SequentialOp::new(*kind, &mut f, &name, de))
                        .collect();
                    layers.push(MixedOp::new(logits, ops)?);
                }
                Pipeline::Sequential { modality: m, layers }
            } else {
                let mut layers = Vec::with_capacity(space.layers);
                for k in 0..space.layers {
                    let name = format!("{m}.layer{k}");
                    let logits = f.arch(format!("{name}.arch"), space.static_ops.len());
                    let ops = space
                        .static_ops
                        .iter()
                        .map(|kind| StaticOp::new(*kind, &mut f, &name, de))
                        .collect();
                    layers.push(MixedOp::new(logits, ops)?);
                }
                Pipeline::Static { modality: m, layers }
            };
            pipelines.push(pipeline);
        }

        let mut nodes = Vec::with_capacity(space.nodes);
        for c in 0..space.nodes {
            let mut selectors = Vec::with_capacity(space.node_inputs(c));
            for i in 0..space.node_inputs(c) {
                let logits = f.arch(format!("node{c}.select{i}.arch"), 2);
                let ops = vec![SelectorOp(SelectorKind::Identity), SelectorOp(SelectorKind::Zero)];
                selectors.push(MixedOp::new(logits, ops)?);
            }
            let name = format!("node{c}.fusion");
            let logits = f.arch(format!("{name}.arch"), space.fusion_ops.len());
            let ops = space
                .fusion_ops
                .iter()
                .map(|kind| FusionOp::new(*kind, &mut f, &name, de))
                .collect();
            nodes.push(FusionNode {
                selectors,
                fusion: MixedOp::new(logits, ops)?,
            });
        }

        let head = Head {
            node_weights: f.filled("head.node_weights", space.nodes, 1.0 / space.nodes as f64),
            output: Dense::new(&mut f, "head.output", de, task.outputs(), true),
        };
        Ok(Self {
            space,
            dims,
            task,
            embeddings,
            pipelines,
            nodes,
            head,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn pipelines(&self) -> &[Pipeline] {
        &self.pipelines
    }

    pub fn nodes(&self) -> &[FusionNode] {
        &self.nodes
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head {
        &mut self.head
    }

    pub fn embedding(&self, m: Modality) -> &Dense {
        &self.embeddings[m.index()]
    }

    pub fn embedding_mut(&mut self, m: Modality) -> &mut Dense {
        &mut self.embeddings[m.index()]
    }

    pub fn pipeline_mut(&mut self, m: Modality) -> &mut Pipeline {
        &mut self.pipelines[m.index()]
    }

    pub fn node_mut(&mut self, c: usize) -> &mut FusionNode {
        &mut self.nodes[c]
    }

    /// All edges in canonical order: pipelines by modality then layer,
    /// then for each node its selectors followed by its fusion edge.
    pub fn edge_ids(&self) -> Vec<EdgeId> {
        let mut ids = Vec::with_capacity(self.space.edge_count());
        for p in &self.pipelines {
            for layer in 0..p.depth() {
                ids.push(EdgeId::Modality {
                    modality: p.modality(),
                    layer,
                });
            }
        }
        for (c, node) in self.nodes.iter().enumerate() {
            for input in 0..node.selectors.len() {
                ids.push(EdgeId::Selector { node: c, input });
            }
            ids.push(EdgeId::Fusion { node: c });
        }
        ids
    }

    pub fn edge(&self, id: EdgeId) -> Result<&dyn Edge> {
        let found = match id {
            EdgeId::Modality { modality, layer } => self.pipelines[modality.index()].edge(layer),
            EdgeId::Selector { node, input } => self
                .nodes
                .get(node)
                .and_then(|n| n.selectors.get(input))
                .map(|s| s as &dyn Edge),
            EdgeId::Fusion { node } => self.nodes.get(node).map(|n| &n.fusion as &dyn Edge),
        };
        found.ok_or_else(|| CoreError::Precondition(format!("no edge {id}")))
    }

    pub fn edge_mut(&mut self, id: EdgeId) -> Result<&mut dyn Edge> {
        let found = match id {
            EdgeId::Modality { modality, layer } => self.pipelines[modality.index()].edge_mut(layer),
            EdgeId::Selector { node, input } => self
                .nodes
                .get_mut(node)
                .and_then(|n| n.selectors.get_mut(input))
                .map(|s| s as &mut dyn Edge),
            EdgeId::Fusion { node } => self.nodes.get_mut(node).map(|n| &mut n.fusion as &mut dyn Edge),
        };
        found.ok_or_else(|| CoreError::Precondition(format!("no edge {id}")))
    }

    pub fn is_discrete(&self) -> bool {
        self.edge_ids()
            .into_iter()
            .all(|id| self.edge(id).map(|e| e.is_resolved()).unwrap_or(false))
    }

    /// Every parameter in a fixed order.
    pub fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = self.embeddings.iter().flat_map(Dense::params).collect();
        for p in &self.pipelines {
            out.extend(p.params());
        }
        for n in &self.nodes {
            for s in &n.selectors {
                out.push(s.logits());
            }
            out.extend(n.fusion.params());
        }
        out.push(&self.head.node_weights);
        out.extend(self.head.output.params());
        out
    }

    /// Mutable counterpart of [`Supernet::params`], same order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.embeddings.iter_mut().flat_map(Dense::params_mut).collect();
        for p in &mut self.pipelines {
            out.extend(p.params_mut());
        }
        for n in &mut self.nodes {
            for s in &mut n.selectors {
                out.push(s.logits_mut());
            }
            out.extend(n.fusion.params_mut());
        }
        out.push(&mut self.head.node_weights);
        out.extend(self.head.output.params_mut());
        out
    }

    /// Total number of scalar parameters (weights and architecture).
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Marks one parameter group as trainable or frozen.
    pub fn set_trainable(&mut self, kind: ParamKind, trainable: bool) {
        for p in self.params_mut() {
            if p.kind() == kind {
                p.tensor_mut().set_requires_grad(trainable);
            }
        }
    }

    pub fn arch_params(&self) -> ArchParams {
        let alpha = self
            .pipelines
            .iter()
            .map(|p| {
                (0..p.depth())
                    .map(|k| p.edge(k).expect("layer in range").logits().values().to_vec())
                    .collect()
            })
            .collect();
        let beta = self
            .nodes
            .iter()
            .map(|n| {
                n.selectors
                    .iter()
                    .map(|s| {
                        let v = s.logits().values();
                        [v[0], *v.get(1).unwrap_or(&f64::NEG_INFINITY)]
                    })
                    .collect()
            })
            .collect();
        let gamma = self
            .nodes
            .iter()
            .map(|n| n.fusion.logits().values().to_vec())
            .collect();
        ArchParams { alpha, beta, gamma }
    }

    /// Overwrites all architecture logits. Shapes must match.
    pub fn set_arch_params(&mut self, arch: &ArchParams) -> Result<()> {
        let mismatch = || CoreError::Dimension("architecture parameters do not fit this supernet".into());
        if arch.alpha.len() != self.pipelines.len()
            || arch.beta.len() != self.nodes.len()
            || arch.gamma.len() != self.nodes.len()
        {
            return Err(mismatch());
        }
        for (m, layers) in Modality::ALL.iter().zip(&arch.alpha) {
            if layers.len() != self.pipelines[m.index()].depth() {
                return Err(mismatch());
            }
            for (k, values) in layers.iter().enumerate() {
                let edge = self.pipelines[m.index()].edge_mut(k).ok_or_else(mismatch)?;
                set_logits(edge, values.clone())?;
            }
        }
        for (c, (betas, gammas)) in arch.beta.iter().zip(&arch.gamma).enumerate() {
            let node = &mut self.nodes[c];
            if betas.len() != node.selectors.len() {
                return Err(mismatch());
            }
            for (s, pair) in node.selectors.iter_mut().zip(betas) {
                set_logits(s, pair.to_vec())?;
            }
            set_logits(&mut node.fusion, gammas.clone())?;
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let b = batch.len();
        let d = &self.dims;
        let expected = [
            (batch.continuous.shape(), vec![b, d.steps, d.continuous]),
            (batch.discrete.shape(), vec![b, d.steps, d.discrete]),
            (batch.demographics.shape(), vec![b, d.demographics]),
            (batch.note.shape(), vec![b, d.note]),
            (batch.targets.shape(), vec![b, self.task.outputs()]),
        ];
        for (got, want) in expected {
            if got != want.as_slice() {
                return Err(CoreError::Dimension(format!(
                    "batch tensor of shape {got:?}, network expects {want:?}"
                )));
            }
        }
        Ok(())
    }

    /// Input embeddings R_m, R_e, s_p, s_n.
    pub fn embed(&self, g: &mut Graph, batch: &Batch) -> Result<Context> {
        self.check_batch(batch)?;
        let inputs = [&batch.continuous, &batch.discrete, &batch.demographics, &batch.note];
        let mut out = Vec::with_capacity(4);
        for (dense, x) in self.embeddings.iter().zip(inputs) {
            let x = g.constant(x.clone());
            out.push(dense.forward(g, x)?);
        }
        Ok(Context {
            continuous: out[0],
            discrete: out[1],
            demographics: out[2],
            note: out[3],
        })
    }

    pub fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<ForwardOutput> {
        let ctx = self.embed(g, batch)?;
        let encodings = self
            .pipelines
            .iter()
            .map(|p| p.forward(g, &ctx))
            .collect::<Result<Vec<_>>>()?;
        let mut features = encodings.clone();
        let mut node_outputs = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let out = node.forward(g, &features)?;
            features.push(out);
            node_outputs.push(out);
        }
        let w = g.param(&self.head.node_weights);
        let terms = node_outputs
            .iter()
            .enumerate()
            .map(|(c, v)| g.scale(*v, w, c))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let h = g.add_all(&terms)?;
        let logits = self.head.output.forward(g, h)?;
        Ok(ForwardOutput {
            logits,
            encodings,
            nodes: node_outputs,
        })
    }

    /// Mean task loss of a batch: logistic loss for binary tasks, softmax
    /// cross-entropy against normalized multi-hot targets otherwise.
    pub fn loss(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let out = self.forward(g, batch)?;
        let targets = g.constant(batch.targets.clone());
        Ok(match self.task {
            TaskKind::Binary => g.bce_with_logits(out.logits, targets)?,
            TaskKind::MultiLabel { .. } => g.softmax_cross_entropy(out.logits, targets)?,
        })
    }

    /// Per-sample output probabilities: one value in (0,1) for binary tasks,
    /// a point on the P-simplex for multi-label.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, batch)?;
        let probs = match self.task {
            TaskKind::Binary => g.sigmoid(out.logits)?,
            TaskKind::MultiLabel { .. } => g.softmax(out.logits, 1)?,
        };
        let width = self.task.outputs();
        Ok(g.value(probs).data().chunks(width).map(<[f64]>::to_vec).collect())
    }

    /// Slim network with only the chosen candidate on every edge. Requires
    /// every edge to be resolved to a single candidate.
    pub fn materialize(&self) -> Result<Supernet> {
        let pipelines = self
            .pipelines
            .iter()
            .map(|p| {
                Ok(match p {
                    Pipeline::Static { modality, layers } => Pipeline::Static {
                        modality: *modality,
                        layers: layers.iter().map(MixedOp::materialize).collect::<Result<_>>()?,
                    },
                    Pipeline::Sequential { modality, layers } => Pipeline::Sequential {
                        modality: *modality,
                        layers: layers.iter().map(MixedOp::materialize).collect::<Result<_>>()?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(FusionNode {
                    selectors: n.selectors.iter().map(MixedOp::materialize).collect::<Result<_>>()?,
                    fusion: n.fusion.materialize()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Supernet {
            space: self.space.clone(),
            dims: self.dims,
            task: self.task,
            embeddings: self.embeddings.clone(),
            pipelines,
            nodes,
            head: self.head.clone(),
        })
    }
}

fn set_logits(edge: &mut dyn Edge, values: Vec<f64>) -> Result<()> {
    let t = Tensor::new(vec![values.len()], values)?;
    if t.shape() != edge.logits().tensor().shape() {
        return Err(CoreError::Dimension(format!(
            "edge `{}` has {} logits, got {}",
            edge.logits().name(),
            edge.logits().len(),
            t.len()
        )));
    }
    edge.logits_mut().tensor_mut().set_data(t.into_data())?;
    Ok(())
}
