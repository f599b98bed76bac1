//! Search space: candidate operations, mixed edges, modality pipelines,
//! the fusion DAG and the prediction head.

mod candidates;
mod layers;
mod mixed;
mod space;
mod supernet;

pub use candidates::{Context, FusionOp, SelectorOp, SequentialOp, StaticOp};
pub use layers::{Attention, Conv, Dense, Gru, ParamFactory, ARCH_INIT_SCALE, CONV_WIDTH};
pub use mixed::{Candidate, Edge, MixedOp};
pub use space::{FusionOpKind, Modality, SearchSpace, SelectorKind, SequentialOpKind, StaticOpKind};
pub use supernet::{ArchParams, EdgeId, ForwardOutput, FusionNode, Head, Pipeline, Supernet};
