//! Reverse-mode autodiff: tensors, the tape, a GRU cell, Adam, and
//! finite-difference verification helpers.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod rng;
pub mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use graph::{Graph, NodeId};
pub use gru::{gru_cell, GruCellIds};
pub use rng::{stable_hash, RngState};
pub use tensor::{Tensor, TensorOf};
