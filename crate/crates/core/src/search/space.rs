use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// The four input modalities, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Continuous,
    Discrete,
    Demographics,
    Note,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Continuous,
        Modality::Discrete,
        Modality::Demographics,
        Modality::Note,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, Modality::Continuous | Modality::Discrete)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Continuous => "continuous",
            Modality::Discrete => "discrete",
            Modality::Demographics => "demographics",
            Modality::Note => "note",
        }
    }

    /// Partner modality for interaction operations of the same kind
    /// (static with static, sequence with sequence).
    pub fn partner(self) -> Modality {
        match self {
            Modality::Continuous => Modality::Discrete,
            Modality::Discrete => Modality::Continuous,
            Modality::Demographics => Modality::Note,
            Modality::Note => Modality::Demographics,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = CoreError;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| CoreError::Config(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), s
                    )))
            }
        }
    };
}

named_enum!(
    /// Candidates for layers of the demographics and note pipelines.
    StaticOpKind {
        Identity => "identity",
        Linear => "linear",
        StaticInteraction => "static-static",
        AttendContinuous => "attend-continuous",
        AttendDiscrete => "attend-discrete",
    }
);

named_enum!(
    /// Candidates for layers of the continuous and discrete pipelines.
    SequentialOpKind {
        Identity => "identity",
        Gru => "gru",
        SelfAttention => "self-attention",
        Conv1d => "conv1d",
        FeedForward => "feed-forward",
        CrossAttention => "cross-attention",
    }
);

named_enum!(
    /// Candidates of a fusion node.
    FusionOpKind {
        Sum => "sum",
        Mlp => "mlp",
        AttentiveSum => "attentive-sum",
    }
);

named_enum!(
    /// The two choices of a feature selector edge.
    SelectorKind {
        Identity => "identity",
        Zero => "zero",
    }
);

/// Shape of the search space: depth, node count, width and the candidate
/// sets of every edge family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// K, mixed layers per modality pipeline.
    pub layers: usize,
    /// C, fusion nodes.
    pub nodes: usize,
    /// d_e, shared embedding width.
    pub embed_dim: usize,
    pub static_ops: Vec<StaticOpKind>,
    pub sequential_ops: Vec<SequentialOpKind>,
    pub fusion_ops: Vec<FusionOpKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            layers: 2,
            nodes: 3,
            embed_dim: 32,
            static_ops: StaticOpKind::ALL.to_vec(),
            sequential_ops: SequentialOpKind::ALL.to_vec(),
            fusion_ops: FusionOpKind::ALL.to_vec(),
        }
    }
}

fn check_set<T: PartialEq + fmt::Debug>(name: &str, set: &[T]) -> Result<()> {
    if set.is_empty() {
        return Err(CoreError::Config(format!("{name} must not be empty")));
    }
    for (i, v) in set.iter().enumerate() {
        if set[..i].contains(v) {
            return Err(CoreError::Config(format!("{name} lists {v:?} twice")));
        }
    }
    Ok(())
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.nodes == 0 || self.embed_dim == 0 {
            return Err(CoreError::Config(format!(
                "layers, nodes and embed_dim must be >= 1, got {} / {} / {}",
                self.layers, self.nodes, self.embed_dim
            )));
        }
        check_set("static_ops", &self.static_ops)?;
        check_set("sequential_ops", &self.sequential_ops)?;
        check_set("fusion_ops", &self.fusion_ops)
    }

    /// Number of inputs seen by fusion node `node` (0-based).
    pub fn node_inputs(&self, node: usize) -> usize {
        4 + node
    }

    /// Total number of mixed edges: `4K + Σ_c (4 + c - 1) + C`.
    pub fn edge_count(&self) -> usize {
        4 * self.layers + (0..self.nodes).map(|c| self.node_inputs(c)).sum::<usize>() + self.nodes
    }

    /// Number of distinct discrete architectures.
    pub fn architecture_count(&self) -> u128 {
        let mut total: u128 = 1;
        for m in Modality::ALL {
            let per_layer = if m.is_sequential() {
                self.sequential_ops.len()
            } else {
                self.static_ops.len()
            } as u128;
            total *= per_layer.pow(self.layers as u32);
        }
        for c in 0..self.nodes {
            total *= 2u128.pow(self.node_inputs(c) as u32) * self.fusion_ops.len() as u128;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in StaticOpKind::ALL {
            assert_eq!(k.name().parse::<StaticOpKind>().unwrap(), *k);
        }
        for k in SequentialOpKind::ALL {
            assert_eq!(k.name().parse::<SequentialOpKind>().unwrap(), *k);
        }
        assert!("pool".parse::<FusionOpKind>().is_err());
    }

    #[test]
    fn edge_count_formula() {
        let s = SearchSpace::default();
        assert_eq!(s.edge_count(), 8 + (4 + 5 + 6) + 3);
        let tiny = SearchSpace {
            layers: 1,
            nodes: 1,
            embed_dim: 4,
            static_ops: vec![StaticOpKind::Identity, StaticOpKind::Linear],
            sequential_ops: vec![SequentialOpKind::Identity, SequentialOpKind::Gru],
            fusion_ops: FusionOpKind::ALL.to_vec(),
        };
        assert_eq!(tiny.architecture_count(), 16 * 16 * 3);
    }
}
