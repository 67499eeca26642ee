use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, AttentionWeights};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
    Multilabel,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
            Task::Multilabel => "multilabel",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            "multilabel" => Ok(Task::Multilabel),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub attention: AttentionConfig,
    /// Number of pre-LN residual attention blocks.
    pub layers: usize,
    /// Rows of the positional table, category slot included.
    pub max_bag: usize,
    /// Logit count; binary tasks use a single logit.
    pub num_labels: usize,
    pub task: Task,
}

impl ModelConfig {
    pub fn new(attention: AttentionConfig, task: Task, num_labels: usize) -> Result<Self> {
        let cfg = Self {
            attention,
            layers: 1,
            max_bag: 64,
            num_labels,
            task,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn d(&self) -> usize {
        self.attention.model_dim
    }

    /// Largest admissible instance count.
    pub fn max_instances(&self) -> usize {
        self.max_bag - 1
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        if self.max_bag < 2 {
            return Err(Error::InvalidConfig(format!(
                "max_bag must be >= 2, got {}",
                self.max_bag
            )));
        }
        match (self.task, self.num_labels) {
            (Task::Binary, 1) => Ok(()),
            (Task::Binary, n) => Err(Error::InvalidConfig(format!(
                "binary task uses one logit, got num_labels={n}"
            ))),
            (Task::Multiclass, n) if n < 2 => Err(Error::InvalidConfig(format!(
                "multiclass task needs >= 2 classes, got {n}"
            ))),
            (Task::Multilabel, 0) => Err(Error::InvalidConfig(
                "multilabel task needs >= 1 label".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Pre-LN attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln_gamma: Matrix,
    pub ln_beta: Matrix,
    pub attention: AttentionWeights,
}

/// Every learnable tensor of the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// 1 × d
    pub category: Matrix,
    /// max_bag × d; row 0 belongs to the category slot
    pub pos_embedding: Matrix,
    pub blocks: Vec<BlockParams>,
    pub final_gamma: Matrix,
    pub final_beta: Matrix,
    /// d × num_labels
    pub mlp_w: Matrix,
    /// 1 × num_labels
    pub mlp_b: Matrix,
}

/// Gradient buffers, shape-congruent with [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d();
        Self {
            category: Matrix::zeros(1, d),
            pos_embedding: Matrix::zeros(cfg.max_bag, d),
            blocks: (0..cfg.layers)
                .map(|_| BlockParams {
                    ln_gamma: Matrix::zeros(1, d),
                    ln_beta: Matrix::zeros(1, d),
                    attention: AttentionWeights::zeros(&cfg.attention),
                })
                .collect(),
            final_gamma: Matrix::zeros(1, d),
            final_beta: Matrix::zeros(1, d),
            mlp_w: Matrix::zeros(d, cfg.num_labels),
            mlp_b: Matrix::zeros(1, cfg.num_labels),
        }
    }

    /// Category vector and positional table from `N(0, 0.02)`, projections
    /// from `N(0, 1/√d)`, unit LN gains, zero biases and depth-wise kernels.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d();
        let category = Matrix::random_normal(1, d, 0.02, rng);
        let pos_embedding = Matrix::random_normal(cfg.max_bag, d, 0.02, rng);
        let blocks = (0..cfg.layers)
            .map(|_| BlockParams {
                ln_gamma: Matrix::filled(1, d, 1.0),
                ln_beta: Matrix::zeros(1, d),
                attention: AttentionWeights::init(&cfg.attention, rng),
            })
            .collect();
        let mlp_w = Matrix::random_normal(d, cfg.num_labels, 1.0 / (d as f64).sqrt(), rng);
        Self {
            category,
            pos_embedding,
            blocks,
            final_gamma: Matrix::filled(1, d, 1.0),
            final_beta: Matrix::zeros(1, d),
            mlp_w,
            mlp_b: Matrix::zeros(1, cfg.num_labels),
        }
    }

    /// Tensors in canonical order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("category".into(), &self.category),
            ("pos_embedding".into(), &self.pos_embedding),
        ];
        for (l, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{l}.ln_gamma"), &block.ln_gamma));
            out.push((format!("block{l}.ln_beta"), &block.ln_beta));
            for (h, head) in block.attention.heads.iter().enumerate() {
                out.push((format!("block{l}.head{h}.w_q"), &head.w_q));
                out.push((format!("block{l}.head{h}.w_k"), &head.w_k));
                out.push((format!("block{l}.head{h}.w_v"), &head.w_v));
                out.push((format!("block{l}.head{h}.dconv"), &head.dconv));
            }
            out.push((format!("block{l}.w_o"), &block.attention.w_o));
        }
        out.push(("final_gamma".into(), &self.final_gamma));
        out.push(("final_beta".into(), &self.final_beta));
        out.push(("mlp_w".into(), &self.mlp_w));
        out.push(("mlp_b".into(), &self.mlp_b));
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![&mut self.category, &mut self.pos_embedding];
        for block in &mut self.blocks {
            out.push(&mut block.ln_gamma);
            out.push(&mut block.ln_beta);
            for head in &mut block.attention.heads {
                out.push(&mut head.w_q);
                out.push(&mut head.w_k);
                out.push(&mut head.w_v);
                out.push(&mut head.dconv);
            }
            out.push(&mut block.attention.w_o);
        }
        out.push(&mut self.final_gamma);
        out.push(&mut self.final_beta);
        out.push(&mut self.mlp_w);
        out.push(&mut self.mlp_b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Verifies every tensor has the shape `cfg` implies.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = ModelParams::zeros(cfg);
        let mine = self.named_tensors();
        let want = reference.named_tensors();
        if mine.len() != want.len() {
            return Err(Error::shape(
                "ModelParams",
                format!("{} tensors, config implies {}", mine.len(), want.len()),
            ));
        }
        for ((name, a), (_, b)) in mine.iter().zip(&want) {
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    "ModelParams",
                    format!("{name} is {:?}, config implies {:?}", a.shape(), b.shape()),
                ));
            }
        }
        Ok(())
    }
}

impl Gradients {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Gradients(ModelParams::zeros(cfg))
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}
