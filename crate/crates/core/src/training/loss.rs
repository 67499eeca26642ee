use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;

/// Bag-level supervision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    /// Binary label or class index, depending on the task.
    Index(usize),
    /// One 0/1 entry per label.
    Labels(Vec<u8>),
}

impl Target {
    pub fn binary(positive: bool) -> Self {
        Target::Index(usize::from(positive))
    }

    pub fn validate(&self, task: Task, num_labels: usize) -> Result<()> {
        match (task, self) {
            (Task::Binary, Target::Index(0 | 1)) => Ok(()),
            (Task::Binary, Target::Index(i)) => Err(Error::ClassOutOfRange {
                index: *i,
                classes: 2,
            }),
            (Task::Multiclass, Target::Index(i)) if *i < num_labels => Ok(()),
            (Task::Multiclass, Target::Index(i)) => Err(Error::ClassOutOfRange {
                index: *i,
                classes: num_labels,
            }),
            (Task::Multilabel, Target::Labels(l)) if l.len() != num_labels => {
                Err(Error::TargetLength {
                    expected: num_labels,
                    got: l.len(),
                })
            }
            (Task::Multilabel, Target::Labels(l)) if l.iter().all(|v| *v <= 1) => Ok(()),
            (Task::Multilabel, Target::Labels(_)) => Err(Error::TargetKind("multilabel")),
            (task, _) => Err(Error::TargetKind(task.as_str())),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    crate::model::sigmoid(x)
}

/// Loss value and its gradient with respect to the raw logits.
///
/// Binary and multi-label use sigmoid cross-entropy (summed over labels);
/// multi-class uses softmax cross-entropy.
pub fn loss(logits: &[f64], target: &Target, task: Task) -> Result<(f64, Vec<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let labels = match task {
        Task::Binary => 1,
        _ => logits.len(),
    };
    if task == Task::Binary && logits.len() != 1 {
        return Err(Error::TargetLength {
            expected: 1,
            got: logits.len(),
        });
    }
    target.validate(task, labels)?;
    match (task, target) {
        (Task::Binary, Target::Index(y)) => {
            let (z, y) = (logits[0], *y as f64);
            Ok((softplus(z) - y * z, vec![sigmoid(z) - y]))
        }
        (Task::Multiclass, Target::Index(class)) => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            let grad = logits
                .iter()
                .enumerate()
                .map(|(i, v)| (v - log_z).exp() - if i == *class { 1.0 } else { 0.0 })
                .collect();
            Ok((log_z - logits[*class], grad))
        }
        (Task::Multilabel, Target::Labels(ys)) => {
            let mut total = 0.0;
            let mut grad = Vec::with_capacity(ys.len());
            for (z, y) in logits.iter().zip(ys) {
                let y = f64::from(*y);
                total += softplus(*z) - y * z;
                grad.push(sigmoid(*z) - y);
            }
            Ok((total, grad))
        }
        _ => unreachable!("validated above"),
    }
}
