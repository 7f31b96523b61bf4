use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState {
            m1: vec![0.0; num_params],
            m2: vec![0.0; num_params],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// The state is left untouched when the gradient is rejected.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if params.len() != grad.len() || params.len() != state.m1.len() {
        return Err(Error::invalid(format!(
            "adam: {} params, {} grads, state sized {}",
            params.len(),
            grad.len(),
            state.m1.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient"));
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m1), m2) in params
        .iter_mut()
        .zip(grad)
        .zip(state.m1.iter_mut())
        .zip(state.m2.iter_mut())
    {
        *m1 = beta1 * *m1 + (1.0 - beta1) * g;
        *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
        let m1_hat = *m1 / c1;
        let m2_hat = *m2 / c2;
        *p -= lr * m1_hat / (m2_hat.sqrt() + eps);
    }
    Ok(())
}
