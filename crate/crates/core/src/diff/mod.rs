//! Dense tensors, a reverse-mode tape, and the optimizers built on them.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GRAD_FLOOR};
pub use graph::{Gradients, Graph, OpKind, Var};
pub use params::{AdamConfig, BoundParams, ParameterSet};
pub use tensor::Tensor;
