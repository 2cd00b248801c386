//! Reverse-mode differentiation over [`Tensor`](crate::Tensor) values.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck};
pub use graph::{Gradients, Graph, NodeId, Unary};
pub use params::{ParamId, ParamStore, Parameter};
