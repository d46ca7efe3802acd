//! Differentiable numeric kernels: tensors, a reverse-mode tape, transformer
//! building blocks, Adam, and checkpoint I/O.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod tensor;

pub use graph::{BackFn, Graph, Sink, Var};
pub use optim::{GradMap, ParamId, ParamStore, Session};
pub use tensor::{Scalar, Tensor};
