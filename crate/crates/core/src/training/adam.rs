use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// One bias-corrected Adam update on a flat slice; `t` is the 1-based step.
pub fn adam_update(
    cfg: &AdamConfig,
    t: u64,
    params: &mut [f64],
    grads: &[f64],
    first: &mut [f64],
    second: &mut [f64],
) {
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(first).zip(second) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Step counter and moment accumulators shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: ModelParams,
    second: ModelParams,
}

impl AdamState {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            step: 0,
            first: ModelParams::zeros(cfg),
            second: ModelParams::zeros(cfg),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.first.is_finite() && self.second.is_finite()
    }
}

/// Applies one Adam step. A non-finite gradient aborts the step before any
/// parameter or accumulator is touched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, g) in grads.0.named_tensors() {
        if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {name}[{pos}] is {}, step {} aborted",
                g.data()[pos],
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step;
    let grads = grads.0.named_tensors();
    for (((p, (_, g)), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.first.tensors_mut())
        .zip(state.second.tensors_mut())
    {
        adam_update(cfg, t, p.data_mut(), g.data(), m.data_mut(), v.data_mut());
    }
    Ok(())
}
