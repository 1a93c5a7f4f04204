//! Minimal reverse-mode differentiation over dense tensors.
//!
//! Design: no graph optimization, no broadcasting beyond trailing-axis
//! rules, auditability over speed. Property tests and oracles run in
//! `f64`; inference and toy training default to `f32`.

mod gradcheck;
mod graph;
pub mod ops;
mod optim;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{BackwardError, Graph, NodeId};
pub use optim::{CosineSchedule, Optimizer, Policy};
pub use tensor::{Scalar, Tensor};
