use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` against `grad`.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) {
    assert_eq!(params.len(), grad.len(), "gradient length");
    assert_eq!(params.len(), state.m.len(), "optimizer state length");
    let c = state.config;
    state.step += 1;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut s, &mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn two_steps_by_hand() {
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = vec![1.0];
        adam_step(&mut s, &mut p, &[0.5]);
        // First step moves by lr * sign(g) up to epsilon.
        assert!((p[0] - (1.0 - 1e-3 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
        adam_step(&mut s, &mut p, &[-1.0]);
        let m = 0.9 * 0.05 + 0.1 * -1.0;
        let v = 0.999 * 0.00025 + 0.001 * 1.0;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64 * 0.999);
        let expect = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8) - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let mut s = AdamState::new(2, AdamConfig { learning_rate: 0.0, ..Default::default() });
        let mut p = vec![0.3, 0.4];
        for _ in 0..5 {
            adam_step(&mut s, &mut p, &[1.0, -3.0]);
        }
        assert_eq!(p, vec![0.3, 0.4]);
    }
}
