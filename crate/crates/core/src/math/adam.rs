use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

/// Adam optimizer state for one flat parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One bias-corrected Adam update of `params` along `-grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dim("adam parameters", self.len(), params.len())?;
        check_dim("adam gradients", self.len(), grads.len())?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in
            params.iter_mut().zip(grads).zip(self.first_moment.iter_mut()).zip(self.second_moment.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = vec![0.3, -1.2, 4.0];
        let before = p.clone();
        let mut adam = AdamState::new(3, 3e-4);
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Step 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
        let lr = 3e-4;
        for g in [0.5, -2.0, 1e-3] {
            let mut p = vec![1.0];
            let mut adam = AdamState::new(1, lr);
            adam.step(&mut p, &[g]).unwrap();
            let expected = 1.0 - lr * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15, "g={g}");
            assert!(((1.0 - p[0]).abs() - lr).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_inputs_give_identical_results() {
        let grads = [0.1, -0.7, 2.5];
        let mut a = vec![1.0, 2.0, 3.0];
        let mut b = a.clone();
        let mut sa = AdamState::new(3, 1e-2);
        let mut sb = AdamState::new(3, 1e-2);
        for _ in 0..5 {
            sa.step(&mut a, &grads).unwrap();
            sb.step(&mut b, &grads).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = AdamState::new(2, 1e-3);
        assert!(adam.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
