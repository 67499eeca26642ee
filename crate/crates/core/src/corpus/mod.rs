//! Data path from token sequences to bags of chunk embeddings.

pub mod baseline;
mod chunk;
pub mod dataset;
mod embed;
pub mod entropy;
mod synthetic;

pub use chunk::chunk;
pub use embed::{load_embeddings, save_embeddings, toy_embed, EmbeddingTable};
pub use entropy::{entropy_inequality_check, joint_entropy, EntropyCheck, JointDistribution};
pub use synthetic::{generate_correlated_task, BagKind, SyntheticTask};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::training::Target;

/// A long input before chunking.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<u32>,
    pub label: Target,
}

/// An ordered bag of instance embeddings with its bag label.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub id: String,
    /// n × d, rows in source order
    pub instances: Matrix,
    pub label: Target,
    /// Per-instance labels, known only for synthetic data.
    pub instance_labels: Option<Vec<u8>>,
}

impl Bag {
    pub fn len(&self) -> usize {
        self.instances.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.rows() == 0
    }
}

/// Bag label from instance labels: 0 iff every instance is 0.
pub fn mil_label(instance_labels: &[u8]) -> Result<u8> {
    if instance_labels.is_empty() {
        return Err(Error::EmptyBag);
    }
    Ok(u8::from(instance_labels.iter().any(|y| *y != 0)))
}
