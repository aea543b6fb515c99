//! Dense-tensor reverse-mode differentiation substrate: the tape, parameter
//! store, Adam, and the shared MLP the encoder and correlation heads build on.

mod graph;
mod mlp;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use mlp::{forward_mlp, MlpSpec, LEAKY_SLOPE};
pub use params::{AdamConfig, ParamStore};
pub use tensor::Tensor;
