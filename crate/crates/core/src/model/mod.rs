//! The bag classifier: category row, positional table, pre-LN residual
//! attention blocks and an affine head over the category row.

pub mod checkpoint;
mod forward;
mod params;

pub use forward::{
    assemble_bag, backward, backward_from_trace, encode, forward, forward_traced, head_logits,
    predict, score_bag, sigmoid, BagEmbedding, ForwardTrace, Prediction,
};
pub use params::{BlockParams, Gradients, ModelConfig, ModelParams, Task};
