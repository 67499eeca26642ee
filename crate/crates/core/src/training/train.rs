use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::loss;
use super::metrics::MetricCounts;
use crate::corpus::Bag;
use crate::error::{Error, Result};
use crate::model::{
    assemble_bag, backward_from_trace, forward, forward_traced, predict, ModelConfig, ModelParams,
    Task,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub task: Task,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            task,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy or micro-F1 on the training bags after the epoch.
    pub metric: f64,
    /// Same metric on held-out bags, when supplied.
    pub eval_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: Task,
    pub metric_name: String,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    /// One `key=value` line per epoch.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&format!(
                "epoch={} loss={:.6} {}={:.4}",
                r.epoch, r.mean_loss, self.metric_name, r.metric
            ));
            if let Some(e) = r.eval_metric {
                out.push_str(&format!(" eval_{}={:.4}", self.metric_name, e));
            }
            out.push('\n');
        }
        out
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Binary | Task::Multiclass => "accuracy",
        Task::Multilabel => "micro_f1",
    }
}

/// Per-bag loss and gradient step. Returns the loss before the update.
pub fn train_step(
    bag: &Bag,
    params: &mut ModelParams,
    model_cfg: &ModelConfig,
    task: Task,
    adam: &mut AdamState,
    adam_cfg: &AdamConfig,
) -> Result<f64> {
    let embedded = assemble_bag(&bag.instances, params)?;
    let trace = forward_traced(&embedded, params, model_cfg)?;
    let (value, d_logits) = loss(trace.logits(), &bag.label, task)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss on bag `{}`", bag.id)));
    }
    let grads = backward_from_trace(&trace, params, model_cfg, &d_logits)?;
    adam_step(params, &grads, adam, adam_cfg)
        .map_err(|e| Error::NonFinite(format!("bag `{}`: {e}", bag.id)))?;
    Ok(value)
}

/// Trains one bag per optimizer step, visiting bags in a seeded shuffled
/// order each epoch.
pub fn train(
    dataset: &[Bag],
    params: &mut ModelParams,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    held_out: Option<&[Bag]>,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    model_cfg.validate()?;
    params.check(model_cfg)?;
    for bag in dataset {
        bag.label.validate(cfg.task, model_cfg.num_labels)?;
    }
    let adam_cfg = cfg.adam();
    let mut adam = AdamState::new(model_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += train_step(&dataset[i], params, model_cfg, cfg.task, &mut adam, &adam_cfg)?;
        }
        let metric = evaluate(dataset, params, model_cfg, cfg.task)?;
        let eval_metric = held_out
            .map(|bags| evaluate(bags, params, model_cfg, cfg.task))
            .transpose()?;
        epochs.push(EpochRecord {
            epoch,
            mean_loss: total / dataset.len() as f64,
            metric,
            eval_metric,
        });
    }
    Ok(TrainReport {
        task: cfg.task,
        metric_name: metric_name(cfg.task).into(),
        epochs,
    })
}

pub fn evaluate_counts(
    dataset: &[Bag],
    params: &ModelParams,
    model_cfg: &ModelConfig,
    task: Task,
) -> Result<MetricCounts> {
    let mut counts = MetricCounts::default();
    for bag in dataset {
        let embedded = assemble_bag(&bag.instances, params)?;
        let prediction = predict(&forward(&embedded, params, model_cfg)?, task)?;
        counts.record(&prediction, &bag.label);
    }
    Ok(counts)
}

/// Accuracy (binary, multi-class) or micro-F1 (multi-label), in percent.
pub fn evaluate(
    dataset: &[Bag],
    params: &ModelParams,
    model_cfg: &ModelConfig,
    task: Task,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = evaluate_counts(dataset, params, model_cfg, task)?;
    Ok(match task {
        Task::Binary | Task::Multiclass => counts.accuracy(),
        Task::Multilabel => counts.micro_f1(),
    })
}
