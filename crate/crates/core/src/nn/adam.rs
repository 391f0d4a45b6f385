use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::Scalar;

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Array1<T>,
    v: Array1<T>,
}

/// Serializable optimizer state for exact run resumption.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(param_count: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: Array1::zeros(param_count),
            v: Array1::zeros(param_count),
        }
    }

    pub fn step(&mut self, params: &mut Array1<T>, grad: &Array1<T>) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] = params[i] - lr * mhat / (vhat.sqrt() + eps);
        }
    }

    pub fn state(&self) -> AdamState {
        AdamState {
            t: self.t,
            m: self.m.iter().map(|&x| x.to_f64() as f32).collect(),
            v: self.v.iter().map(|&x| x.to_f64() as f32).collect(),
        }
    }

    pub fn restore(&mut self, state: &AdamState) {
        assert_eq!(state.m.len(), self.m.len(), "optimizer state size mismatch");
        self.t = state.t;
        self.m = Array1::from_iter(state.m.iter().map(|&x| T::from_f64(x as f64)));
        self.v = Array1::from_iter(state.v.iter().map(|&x| T::from_f64(x as f64)));
    }
}
