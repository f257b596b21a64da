use super::{Gradients, Mlp, NnError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
        }
    }
}

/// One bias-corrected Adam descent step on `net`.
pub fn adam_step(net: &mut Mlp, state: &mut AdamState, grads: &Gradients) -> Result<(), NnError> {
    let layout_ok = grads.layers.len() == net.layers.len()
        && state.first_moment.layers.len() == net.layers.len()
        && net.layers.iter().zip(&grads.layers).zip(&state.first_moment.layers).all(|((l, g), m)| {
            l.weights.len() == g.weights.len()
                && l.biases.len() == g.biases.len()
                && m.weights.len() == g.weights.len()
                && m.biases.len() == g.biases.len()
        });
    if !layout_ok {
        return Err(NnError::ShapeMismatch("gradients or moments do not match the network".into()));
    }
    if !grads.is_finite() {
        return Err(NnError::NonFiniteGradient);
    }
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - c.beta1.powi(t);
    let correction2 = 1.0 - c.beta2.powi(t);

    let params = net.layers_mut().iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()));
    let m = state.first_moment.values_mut();
    let v = state.second_moment.values_mut();
    for (((p, m), v), g) in params.zip(m).zip(v).zip(grads.values()) {
        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
    Ok(())
}
