//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a tape built fresh for every forward pass. Operations
//! append nodes and return [`Var`] handles; [`Graph::backward`] walks the
//! tape in reverse and returns per-node and per-parameter [`Gradients`].
//! Every primitive checks its output for NaN/Inf and fails instead of
//! propagating non-finite values.

pub mod check;
mod error;
mod graph;
mod ops;
mod param;
mod tensor;

pub use error::{AutodiffError, Result};
pub use graph::{softmax_slice, Gradients, Graph, Var};
pub use param::{uniform_fan_in, Param, ParamId, ParamKind};
pub use tensor::Tensor;
