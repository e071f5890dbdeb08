//! Dense arrays, a static reverse-mode autodiff graph and a finite-difference
//! gradient checker. Everything the model needs to train, nothing more.

mod array;
mod gradcheck;
mod graph;

pub use array::DenseArray;
pub use gradcheck::grad_check;
pub(crate) use graph::matmul_kernel;
pub use graph::{backward, forward, Bindings, CompGraph, Gradients, LeafKind, NodeId, Op, Values};
