//! Central finite differences against the analytic backward pass.

use serde::Serialize;

use super::loss::{loss, Target};
use crate::error::Result;
use crate::model::{assemble_bag, backward, forward, ModelConfig, ModelParams};
use crate::linalg::Matrix;

pub const REL_ERR_FLOOR: f64 = 1e-8;

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_err: f64,
    /// Coordinate index and (analytic, numeric) values at the worst point.
    pub worst: (usize, f64, f64),
    #[serde(skip)]
    pub rel_errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn coordinates(&self) -> usize {
        self.tensors.iter().map(|t| t.coordinates).sum()
    }

    /// Coordinates whose relative error exceeds `tolerance`.
    pub fn failures(&self, tolerance: f64) -> usize {
        self.tensors
            .iter()
            .flat_map(|t| &t.rel_errors)
            .filter(|e| **e > tolerance)
            .count()
    }
}

/// Checks `analytic` against central differences of `f` around `theta`.
pub fn check_function(
    theta: &[f64],
    analytic: &[f64],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> TensorCheck {
    let mut point = theta.to_vec();
    let mut worst = (0, 0.0, 0.0);
    let mut max_rel_err = -1.0;
    let mut rel_errors = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        point[i] = theta[i] + step;
        let plus = f(&point);
        point[i] = theta[i] - step;
        let minus = f(&point);
        point[i] = theta[i];
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > max_rel_err {
            max_rel_err = err;
            worst = (i, analytic[i], numeric);
        }
        rel_errors.push(err);
    }
    TensorCheck {
        name: String::new(),
        coordinates: theta.len(),
        max_rel_err: max_rel_err.max(0.0),
        worst,
        rel_errors,
    }
}

fn bag_loss(
    instances: &Matrix,
    params: &ModelParams,
    cfg: &ModelConfig,
    target: &Target,
) -> Result<(f64, Vec<f64>)> {
    let bag = assemble_bag(instances, params)?;
    loss(&forward(&bag, params, cfg)?, target, cfg.task)
}

/// Perturbs every parameter coordinate and compares the loss slope with the
/// analytic gradient. Cost is two forward passes per coordinate.
pub fn finite_diff_check(
    params: &ModelParams,
    instances: &Matrix,
    target: &Target,
    cfg: &ModelConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let (_, d_logits) = bag_loss(instances, params, cfg, target)?;
    let grads = backward(&assemble_bag(instances, params)?, params, cfg, &d_logits)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .0
        .named_tensors()
        .into_iter()
        .map(|(n, m)| (n, m.data().to_vec()))
        .collect();

    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(analytic.len());
    for (index, (name, grad)) in analytic.into_iter().enumerate() {
        let theta = probe.tensors_mut()[index].data().to_vec();
        let mut failure = None;
        let mut check = check_function(&theta, &grad, step, |point| {
            let mut shifted = probe.clone();
            shifted.tensors_mut()[index].data_mut().copy_from_slice(point);
            match bag_loss(instances, &shifted, cfg, target) {
                Ok((value, _)) => value,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        check.name = name;
        tensors.push(check);
        probe.tensors_mut()[index].data_mut().copy_from_slice(&theta);
    }
    Ok(GradCheckReport { tensors })
}
