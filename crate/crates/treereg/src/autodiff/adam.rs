//! Adam with bias correction.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update, in place.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::LengthMismatch {
                context: "adam update",
                expected: self.first_moment.len(),
                actual: grads.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(3, 1e-3);
        let mut params = vec![0.5, -0.25, 2.0];
        let before = params.clone();
        for _ in 0..10 {
            state.update(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 10);
    }

    #[test]
    fn single_step_magnitude_is_learning_rate() {
        // From zero moments with g = 1: m_hat = 1, v_hat = 1, so the update
        // is -lr / (1 + eps) which is approximately -lr.
        let mut state = AdamState::new(1, 1e-3);
        let mut params = vec![0.0];
        state.update(&mut params, &[1.0]).unwrap();
        assert!((params[0] + 1e-3).abs() < 1e-9, "got {}", params[0]);
    }

    #[test]
    fn constant_gradient_moves_opposite_sign() {
        let mut state = AdamState::new(2, 1e-2);
        let mut params = vec![0.0, 0.0];
        for _ in 0..100 {
            state.update(&mut params, &[0.7, -0.3]).unwrap();
        }
        assert!(params[0] < 0.0);
        assert!(params[1] > 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut state = AdamState::new(2, 1e-3);
        let mut params = vec![0.0, 0.0];
        assert!(state.update(&mut params, &[1.0]).is_err());
    }
}
