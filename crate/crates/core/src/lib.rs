//! Hierarchical attention networks for multi-label document classification,
//! in monolingual form and as multilingual models that share encoders and/or
//! attention across languages with disjoint label sets.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod model;
pub mod multitask;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Gradients, Graph, NodeId, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::{Activation, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type ParamStore64 = ParamStore<f64>;
