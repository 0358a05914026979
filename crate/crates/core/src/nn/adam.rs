use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch { context: "Adam step", expected: self.m.len(), actual: theta.len().min(grad.len()) });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Applies one Adam update to `theta`.
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64]) -> Result<()> {
    state.step(theta, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(3, 0.01);
        let mut theta = vec![1.0, 2.0, 3.0];
        s.step(&mut theta, &[0.5, -3.0, 100.0]).unwrap();
        for (t, (orig, sign)) in theta.iter().zip([(1.0, -1.0), (2.0, 1.0), (3.0, -1.0)]) {
            assert!((t - orig - sign * 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = AdamState::new(2, 0.1);
        let mut theta = vec![0.3, -0.7];
        for _ in 0..10 {
            s.step(&mut theta, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(theta, vec![0.3, -0.7]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut s = AdamState::new(4, 0.1);
        let mut theta = vec![1.0; 4];
        for _ in 0..500 {
            let g = theta.clone();
            s.step(&mut theta, &g).unwrap();
        }
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2, 0.1);
        assert!(s.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
