use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CoreError, Result};
use crate::search::{EdgeId, FusionOpKind, Modality, SelectorKind, Supernet};

pub const ARCHITECTURE_FORMAT: &str = "mmnas-architecture/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineChoice {
    pub modality: Modality,
    /// `static` or `sequential`.
    pub op_set: String,
    /// Chosen operation name per layer.
    pub ops: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeChoice {
    /// One character per input `[z₁..z₄, g₁..]`: `1` kept (Identity),
    /// `0` dropped (Zero).
    pub inputs: String,
    pub fusion: FusionOpKind,
}

impl NodeChoice {
    pub fn selected(&self) -> Vec<bool> {
        self.inputs.chars().map(|c| c == '1').collect()
    }
}

/// One operation per edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteArchitecture {
    pub pipelines: Vec<PipelineChoice>,
    pub nodes: Vec<NodeChoice>,
}

/// Where an exported architecture came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub discretizer: String,
    /// Pruning events recorded, 0 for one-shot discretizers.
    pub trace_events: usize,
    pub initial_metric: Option<f64>,
    pub final_metric: Option<f64>,
}

/// On-disk architecture document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureExport {
    pub format: String,
    #[serde(flatten)]
    pub architecture: DiscreteArchitecture,
    pub provenance: Option<Provenance>,
}

fn op_set(m: Modality) -> &'static str {
    if m.is_sequential() {
        "sequential"
    } else {
        "static"
    }
}

impl DiscreteArchitecture {
    /// Reads the architecture off a network whose edges are all resolved.
    pub fn from_supernet(net: &Supernet) -> Result<Self> {
        let chosen = |id: EdgeId| -> Result<&'static str> {
            let edge = net.edge(id)?;
            if !edge.is_resolved() {
                return Err(CoreError::Precondition(format!(
                    "edge {id} still has {} live candidates",
                    edge.alive_count()
                )));
            }
            Ok(edge.candidate_names()[edge.alive_indices()[0]])
        };
        let mut pipelines = Vec::new();
        for p in net.pipelines() {
            let modality = p.modality();
            let ops = (0..p.depth())
                .map(|layer| chosen(EdgeId::Modality { modality, layer }).map(str::to_string))
                .collect::<Result<_>>()?;
            pipelines.push(PipelineChoice {
                modality,
                op_set: op_set(modality).to_string(),
                ops,
            });
        }
        let mut nodes = Vec::new();
        for (c, node) in net.nodes().iter().enumerate() {
            let mut inputs = String::new();
            for input in 0..node.selectors.len() {
                let name = chosen(EdgeId::Selector { node: c, input })?;
                inputs.push(if name == SelectorKind::Identity.name() { '1' } else { '0' });
            }
            let fusion = chosen(EdgeId::Fusion { node: c })?.parse()?;
            nodes.push(NodeChoice { inputs, fusion });
        }
        Ok(Self { pipelines, nodes })
    }

    /// Chosen candidate index for every edge, in canonical edge order.
    pub fn choices(&self, net: &Supernet) -> Result<Vec<(EdgeId, usize)>> {
        let mismatch = |what: String| CoreError::Config(format!("architecture does not fit the search space: {what}"));
        if self.pipelines.len() != net.pipelines().len() || self.nodes.len() != net.nodes().len() {
            return Err(mismatch("pipeline or node count".into()));
        }
        let index_of = |id: EdgeId, name: &str| -> Result<usize> {
            net.edge(id)?
                .candidate_names()
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| mismatch(format!("`{name}` is not a candidate on {id}")))
        };
        let mut out = Vec::new();
        for (choice, p) in self.pipelines.iter().zip(net.pipelines()) {
            if choice.modality != p.modality() || choice.ops.len() != p.depth() {
                return Err(mismatch(format!("pipeline {}", choice.modality)));
            }
            for (layer, op) in choice.ops.iter().enumerate() {
                let id = EdgeId::Modality {
                    modality: p.modality(),
                    layer,
                };
                out.push((id, index_of(id, op)?));
            }
        }
        for (c, (choice, node)) in self.nodes.iter().zip(net.nodes()).enumerate() {
            let selected = choice.selected();
            if selected.len() != node.selectors.len() || choice.inputs.chars().any(|ch| ch != '0' && ch != '1') {
                return Err(mismatch(format!("input mask `{}` of node {c}", choice.inputs)));
            }
            for (input, keep) in selected.into_iter().enumerate() {
                let id = EdgeId::Selector { node: c, input };
                let kind = if keep { SelectorKind::Identity } else { SelectorKind::Zero };
                out.push((id, index_of(id, kind.name())?));
            }
            let id = EdgeId::Fusion { node: c };
            out.push((id, index_of(id, choice.fusion.name())?));
        }
        Ok(out)
    }

    /// Resolves every edge of `net` to this architecture's choice. Edges are
    /// revived first, so this also works on partially pruned networks.
    pub fn apply(&self, net: &mut Supernet) -> Result<()> {
        for (id, index) in self.choices(net)? {
            let edge = net.edge_mut(id)?;
            for i in 0..edge.len() {
                edge.set_alive(i, true)?;
            }
            edge.keep_only(index)?;
        }
        Ok(())
    }

    /// Slim network with this architecture and `net`'s weights.
    pub fn materialize(&self, net: &Supernet) -> Result<Supernet> {
        let mut resolved = net.clone();
        self.apply(&mut resolved)?;
        resolved.materialize()
    }

    /// Builds an architecture from per-edge candidate indices in canonical
    /// order.
    pub fn from_choices(net: &Supernet, choices: &[usize]) -> Result<Self> {
        let ids = net.edge_ids();
        if ids.len() != choices.len() {
            return Err(CoreError::Config(format!(
                "{} choices for {} edges",
                choices.len(),
                ids.len()
            )));
        }
        let mut resolved = net.clone();
        for (id, index) in ids.into_iter().zip(choices) {
            let edge = resolved.edge_mut(id)?;
            for i in 0..edge.len() {
                edge.set_alive(i, true)?;
            }
            edge.keep_only(*index)?;
        }
        Self::from_supernet(&resolved)
    }

    /// Every discrete architecture of `net`'s search space.
    pub fn enumerate(net: &Supernet) -> Result<Vec<Self>> {
        let sizes = net
            .edge_ids()
            .into_iter()
            .map(|id| net.edge(id).map(|e| e.len()))
            .collect::<Result<Vec<_>>>()?;
        let total: usize = sizes.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut digits = vec![0; sizes.len()];
        for _ in 0..total {
            out.push(Self::from_choices(net, &digits)?);
            // little-endian on the last edge
            for (d, size) in digits.iter_mut().zip(&sizes).rev() {
                *d += 1;
                if *d < *size {
                    break;
                }
                *d = 0;
            }
        }
        Ok(out)
    }

    pub fn export(&self, provenance: Option<Provenance>) -> ArchitectureExport {
        ArchitectureExport {
            format: ARCHITECTURE_FORMAT.to_string(),
            architecture: self.clone(),
            provenance,
        }
    }
}

impl ArchitectureExport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != ARCHITECTURE_FORMAT {
            return Err(CoreError::Config(format!("unsupported architecture format `{}`", doc.format)));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}
