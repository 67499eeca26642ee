//! Order-blind reference: logistic regression on the mean of a bag's
//! instances.

use super::Bag;
use crate::error::{Error, Result};
use crate::model::sigmoid;
use crate::training::{adam_update, AdamConfig, Target};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

fn features(bag: &Bag) -> Vec<f64> {
    let n = bag.len() as f64;
    bag.instances.column_sums().data().iter().map(|s| s / n).collect()
}

fn positive(bag: &Bag) -> Result<bool> {
    match bag.label {
        Target::Index(y @ (0 | 1)) => Ok(y == 1),
        _ => Err(Error::TargetKind("binary")),
    }
}

fn accuracy(bags: &[Bag], w: &[f64]) -> Result<f64> {
    let mut correct = 0;
    for bag in bags {
        let x = features(bag);
        let z = w[0] + x.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>();
        if (z > 0.0) == positive(bag)? {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / bags.len() as f64)
}

/// Full-batch Adam on mean-pooled features, weights starting at zero.
pub fn mean_pool_probe(train: &[Bag], test: &[Bag], epochs: usize, learning_rate: f64) -> Result<ProbeReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = train[0].instances.cols();
    let xs: Vec<Vec<f64>> = train.iter().map(features).collect();
    let ys: Vec<f64> = train
        .iter()
        .map(|b| positive(b).map(f64::from))
        .collect::<Result<_>>()?;
    let cfg = AdamConfig {
        learning_rate,
        ..AdamConfig::default()
    };
    // w[0] is the bias
    let mut w = vec![0.0; d + 1];
    let mut first = vec![0.0; d + 1];
    let mut second = vec![0.0; d + 1];
    for t in 1..=epochs {
        let mut grad = vec![0.0; d + 1];
        for (x, y) in xs.iter().zip(&ys) {
            let z = w[0] + x.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>();
            let r = sigmoid(z) - y;
            grad[0] += r;
            for (g, xi) in grad[1..].iter_mut().zip(x) {
                *g += r * xi;
            }
        }
        for g in grad.iter_mut() {
            *g /= xs.len() as f64;
        }
        adam_update(&cfg, t as u64, &mut w, &grad, &mut first, &mut second);
    }
    Ok(ProbeReport {
        train_accuracy: accuracy(train, &w)?,
        test_accuracy: accuracy(test, &w)?,
    })
}
