use super::params::{BlockParams, Gradients, ModelConfig, ModelParams, Task};
use crate::attention::{multi_head_backward, multi_head_forward, MultiHeadCache};
use crate::error::{Error, Result};
use crate::linalg::{layer_norm_backward, layer_norm_forward, LayerNormCache, Matrix, LAYER_NORM_EPS};

/// Input matrix of the first block: the category row followed by the
/// instance embeddings, plus positional rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BagEmbedding {
    x0: Matrix,
}

impl BagEmbedding {
    pub fn matrix(&self) -> &Matrix {
        &self.x0
    }

    pub fn instance_count(&self) -> usize {
        self.x0.rows() - 1
    }
}

pub fn assemble_bag(instances: &Matrix, params: &ModelParams) -> Result<BagEmbedding> {
    let n = instances.rows();
    let capacity = params.pos_embedding.rows().saturating_sub(1);
    if n == 0 {
        return Err(Error::EmptyBag);
    }
    if n > capacity {
        return Err(Error::Capacity {
            instances: n,
            capacity,
        });
    }
    if instances.cols() != params.category.cols() {
        return Err(Error::shape(
            "assemble_bag",
            format!(
                "instance dim {} vs model dim {}",
                instances.cols(),
                params.category.cols()
            ),
        ));
    }
    let mut x0 = Matrix::vconcat(&[&params.category, instances])?;
    x0.add_assign(&params.pos_embedding.slice_rows(0, n + 1))?;
    Ok(BagEmbedding { x0 })
}

#[derive(Debug, Clone)]
struct BlockTrace {
    ln: LayerNormCache,
    normed: Matrix,
    attention: MultiHeadCache,
}

/// Everything the backward pass reuses from a forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    blocks: Vec<BlockTrace>,
    rows: usize,
    head_ln: LayerNormCache,
    head_input: Matrix,
    logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

fn gamma_beta(block: &BlockParams) -> (&[f64], &[f64]) {
    (block.ln_gamma.data(), block.ln_beta.data())
}

fn run_blocks(
    bag: &BagEmbedding,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(Matrix, Vec<BlockTrace>)> {
    if params.blocks.len() != cfg.layers {
        return Err(Error::shape(
            "forward",
            format!("{} blocks for {} layers", params.blocks.len(), cfg.layers),
        ));
    }
    let mut x = bag.x0.clone();
    let mut traces = Vec::with_capacity(cfg.layers);
    for block in &params.blocks {
        let (gamma, beta) = gamma_beta(block);
        let (normed, ln) = layer_norm_forward(&x, gamma, beta, LAYER_NORM_EPS)?;
        let (delta, attention) = multi_head_forward(&normed, &block.attention, &cfg.attention)?;
        let next = x.add(&delta)?;
        traces.push(BlockTrace {
            ln,
            normed,
            attention,
        });
        x = next;
    }
    Ok((x, traces))
}

/// Output of the last block (`X^L`), all rows.
pub fn encode(bag: &BagEmbedding, params: &ModelParams, cfg: &ModelConfig) -> Result<Matrix> {
    run_blocks(bag, params, cfg).map(|(x, _)| x)
}

fn head_forward(encoded: &Matrix, params: &ModelParams) -> Result<(Vec<f64>, LayerNormCache, Matrix)> {
    let row0 = encoded.slice_rows(0, 1);
    let (normed, ln) = layer_norm_forward(
        &row0,
        params.final_gamma.data(),
        params.final_beta.data(),
        LAYER_NORM_EPS,
    )?;
    let logits = normed.matmul(&params.mlp_w)?.add(&params.mlp_b)?.into_vec();
    Ok((logits, ln, normed))
}

/// Classifier head applied to an encoded bag; reads row 0 only.
pub fn head_logits(encoded: &Matrix, params: &ModelParams) -> Result<Vec<f64>> {
    head_forward(encoded, params).map(|(logits, _, _)| logits)
}

pub fn forward_traced(
    bag: &BagEmbedding,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<ForwardTrace> {
    let (encoded, blocks) = run_blocks(bag, params, cfg)?;
    let (logits, head_ln, head_input) = head_forward(&encoded, params)?;
    Ok(ForwardTrace {
        blocks,
        rows: encoded.rows(),
        head_ln,
        head_input,
        logits,
    })
}

/// Raw logits of the bag; activations belong to the loss.
pub fn forward(bag: &BagEmbedding, params: &ModelParams, cfg: &ModelConfig) -> Result<Vec<f64>> {
    forward_traced(bag, params, cfg).map(|t| t.logits)
}

pub fn backward_from_trace(
    trace: &ForwardTrace,
    params: &ModelParams,
    cfg: &ModelConfig,
    upstream: &[f64],
) -> Result<Gradients> {
    if upstream.len() != cfg.num_labels {
        return Err(Error::TargetLength {
            expected: cfg.num_labels,
            got: upstream.len(),
        });
    }
    let mut grads = Gradients::zeros(cfg);
    let g = &mut grads.0;
    let d_logits = Matrix::row_vector(upstream);

    g.mlp_b = d_logits.clone();
    g.mlp_w = trace.head_input.t_matmul(&d_logits)?;
    let d_normed = d_logits.matmul_t(&params.mlp_w)?;
    let (d_row0, d_gamma, d_beta) =
        layer_norm_backward(&trace.head_ln, params.final_gamma.data(), &d_normed);
    g.final_gamma = Matrix::row_vector(&d_gamma);
    g.final_beta = Matrix::row_vector(&d_beta);

    let mut d_x = Matrix::zeros(trace.rows, cfg.d());
    d_x.row_mut(0).copy_from_slice(d_row0.data());

    for ((block, bt), gb) in params
        .blocks
        .iter()
        .zip(&trace.blocks)
        .zip(g.blocks.iter_mut())
        .rev()
    {
        let (d_normed, att_grads) = multi_head_backward(
            &bt.normed,
            &block.attention,
            &cfg.attention,
            &bt.attention,
            &d_x,
        )?;
        let (d_in, d_gamma, d_beta) = layer_norm_backward(&bt.ln, block.ln_gamma.data(), &d_normed);
        d_x.add_assign(&d_in)?;
        gb.attention = att_grads;
        gb.ln_gamma = Matrix::row_vector(&d_gamma);
        gb.ln_beta = Matrix::row_vector(&d_beta);
    }

    g.category = d_x.slice_rows(0, 1);
    for r in 0..trace.rows {
        g.pos_embedding.row_mut(r).copy_from_slice(d_x.row(r));
    }
    Ok(grads)
}

/// Reverse-mode gradients of `upstream · logits` with respect to every
/// parameter.
pub fn backward(
    bag: &BagEmbedding,
    params: &ModelParams,
    cfg: &ModelConfig,
    upstream: &[f64],
) -> Result<Gradients> {
    let trace = forward_traced(bag, params, cfg)?;
    backward_from_trace(&trace, params, cfg, upstream)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Binary { probability: f64, label: usize },
    Multiclass { class: usize, logits: Vec<f64> },
    Multilabel { probabilities: Vec<f64>, labels: Vec<usize> },
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Turns logits into a prediction. A binary probability of exactly 0.5
/// decides class 0.
pub fn predict(logits: &[f64], task: Task) -> Result<Prediction> {
    match task {
        Task::Binary => {
            let [logit] = logits else {
                return Err(Error::TargetLength {
                    expected: 1,
                    got: logits.len(),
                });
            };
            let probability = sigmoid(*logit);
            Ok(Prediction::Binary {
                probability,
                label: usize::from(probability > 0.5),
            })
        }
        Task::Multiclass => {
            if logits.is_empty() {
                return Err(Error::TargetLength { expected: 2, got: 0 });
            }
            let mut class = 0;
            for (i, v) in logits.iter().enumerate() {
                if *v > logits[class] {
                    class = i;
                }
            }
            Ok(Prediction::Multiclass {
                class,
                logits: logits.to_vec(),
            })
        }
        Task::Multilabel => {
            let probabilities: Vec<f64> = logits.iter().map(|v| sigmoid(*v)).collect();
            let labels = probabilities
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.5)
                .map(|(i, _)| i)
                .collect();
            Ok(Prediction::Multilabel {
                probabilities,
                labels,
            })
        }
    }
}

pub fn score_bag(
    instances: &Matrix,
    params: &ModelParams,
    cfg: &ModelConfig,
    task: Task,
) -> Result<Prediction> {
    let bag = assemble_bag(instances, params)?;
    predict(&forward(&bag, params, cfg)?, task)
}
