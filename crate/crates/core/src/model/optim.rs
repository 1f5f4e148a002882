use serde::{Deserialize, Serialize};

use super::{Gradient, ParameterVector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Per-run optimizer state. Adam moments are allocated lazily on the first
/// step so the same constructor serves both kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self { kind, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    /// Applies one update in place according to `kind`.
    pub fn step(&mut self, params: &mut ParameterVector, grad: &Gradient) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad.iter()) {
                    *p -= self.learning_rate * g;
                }
            }
            OptimizerKind::Adam => self.adam_in_place(params, grad),
        }
    }

    fn adam_in_place(&mut self, params: &mut ParameterVector, grad: &Gradient) {
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
        }
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// `params - learning_rate * grad`.
pub fn sgd_step(state: &OptimizerState, params: &ParameterVector, grad: &Gradient) -> ParameterVector {
    params.iter().zip(grad.iter()).map(|(p, g)| p - state.learning_rate * g).collect::<Vec<_>>().into()
}

/// Bias-corrected Adam update; returns the new parameters and state.
pub fn adam_step(
    state: &OptimizerState,
    params: &ParameterVector,
    grad: &Gradient,
) -> (ParameterVector, OptimizerState) {
    let mut next = state.clone();
    let mut out = params.clone();
    next.adam_in_place(&mut out, grad);
    (out, next)
}
