//! Minimal reverse-mode autodiff used by the separation network.

mod graph;
pub mod optim;
mod params;
mod tensor;

pub use graph::{BatchNormParams, BatchStats, Gradients, Graph, Var, BN_EPS};
pub use params::{uniform_init, ParamEntry, ParamId, ParamStore};
pub use tensor::Tensor;
