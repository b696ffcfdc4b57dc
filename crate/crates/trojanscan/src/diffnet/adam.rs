//! Adam with bias correction.

use super::network::Network;
use super::tensor::Tensor;
use super::train::TrainConfig;

/// The four Adam hyperparameters, detached from the rest of a training
/// configuration so optimizer state can be shared across callers.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl From<&TrainConfig> for AdamHyper {
    fn from(cfg: &TrainConfig) -> Self {
        AdamHyper {
            learning_rate: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }
}

/// First/second moment estimates plus the step counter for one parameter
/// tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a flat parameter slice.
pub fn adam_step(data: &mut [f64], grad: &[f64], state: &mut AdamState, hp: &AdamHyper) {
    assert_eq!(data.len(), grad.len(), "gradient length mismatch");
    assert_eq!(data.len(), state.m.len(), "optimizer state length mismatch");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..data.len() {
        let g = grad[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        data[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

/// Adam update for a tensor, reading the gradient from its grad buffer
/// (allocated zeroed if absent, so a grad-less tensor is left unchanged).
pub fn adam_step_tensor(t: &mut Tensor, state: &mut AdamState, hp: &AdamHyper) {
    let (data, grad) = t.data_mut_and_grad();
    adam_step(data, grad, state, hp);
}

/// Optimizer state for every parameter tensor of a network, aligned with
/// [`Network::params_mut`] order.
#[derive(Debug)]
pub struct NetworkOptimizer {
    states: Vec<AdamState>,
    hp: AdamHyper,
}

impl NetworkOptimizer {
    pub fn new(net: &Network, hp: AdamHyper) -> Self {
        let states = net
            .params()
            .iter()
            .map(|p| AdamState::new(p.len()))
            .collect();
        NetworkOptimizer { states, hp }
    }

    /// Apply one Adam step to every parameter from its accumulated gradient.
    pub fn step(&mut self, net: &mut Network) {
        for (param, state) in net.params_mut().into_iter().zip(&mut self.states) {
            adam_step_tensor(param, state, &self.hp);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut data = vec![0.25, -1.5, 3.0];
        let grad = vec![0.0; 3];
        let mut st = AdamState::new(3);
        adam_step(&mut data, &grad, &mut st, &AdamHyper::default());
        assert_eq!(data, vec![0.25, -1.5, 3.0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Bias correction makes the first step m_hat/(sqrt(v_hat)+eps) ~ 1.
        let mut data = vec![0.5];
        let grad = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut data, &grad, &mut st, &AdamHyper::default());
        assert!((data[0] - 0.499).abs() < 1e-10);
    }

    #[test]
    fn two_steps_match_scalar_reference_trace() {
        // Independent scalar re-derivation of the update, applied twice with
        // constant gradient 1 from theta = 0.5.
        let hp = AdamHyper::default();
        let mut reference = 0.5_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=2 {
            m = hp.beta1 * m + (1.0 - hp.beta1);
            v = hp.beta2 * v + (1.0 - hp.beta2);
            let m_hat = m / (1.0 - hp.beta1.powi(t));
            let v_hat = v / (1.0 - hp.beta2.powi(t));
            reference -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.eps);
        }

        let mut data = vec![0.5];
        let mut st = AdamState::new(1);
        adam_step(&mut data, &[1.0], &mut st, &hp);
        adam_step(&mut data, &[1.0], &mut st, &hp);
        assert!((data[0] - reference).abs() < 1e-15);
        // Frozen from a 50-digit evaluation of the same recurrence.
        assert!((data[0] - 4.98000000020e-1).abs() < 1e-11);
    }
}
