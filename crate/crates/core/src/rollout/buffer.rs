use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use super::gae_advantages;
use crate::error::{check_dim, Error, Result};

/// Fixed-capacity on-policy storage of `n_steps x n_envs` transitions,
/// indexed step-major (`t * n_envs + env`).
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    n_steps: usize,
    n_envs: usize,
    obs_dim: usize,
    action_width: usize,
    filled: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    /// Environment rewards as received.
    pub raw_rewards: Vec<f64>,
    /// Scaled rewards, including the bootstrap value on time-limit cuts.
    pub rewards: Vec<f64>,
    /// The episode ended at this step (terminated or truncated).
    pub dones: Vec<bool>,
    /// Behaviour-policy log-probabilities of the stored actions.
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_steps: usize, n_envs: usize, obs_dim: usize, action_width: usize) -> Self {
        let n = n_steps * n_envs;
        Self {
            n_steps,
            n_envs,
            obs_dim,
            action_width,
            filled: 0,
            observations: Vec::with_capacity(n * obs_dim),
            actions: Vec::with_capacity(n * action_width),
            raw_rewards: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            returns: Vec::new(),
            advantages: Vec::new(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_envs(&self) -> usize {
        self.n_envs
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_width(&self) -> usize {
        self.action_width
    }

    /// Total number of transitions when full.
    pub fn capacity(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn len(&self) -> usize {
        self.filled * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.n_steps
    }

    pub fn clear(&mut self) {
        self.filled = 0;
        self.observations.clear();
        self.actions.clear();
        self.raw_rewards.clear();
        self.rewards.clear();
        self.dones.clear();
        self.log_probs.clear();
        self.values.clear();
        self.returns.clear();
        self.advantages.clear();
    }

    /// Appends one time step for every environment.
    #[allow(clippy::too_many_arguments)]
    pub fn push_step(
        &mut self,
        observations: &[Vec<f64>],
        actions: &[Vec<f64>],
        raw_rewards: &[f64],
        rewards: &[f64],
        dones: &[bool],
        log_probs: &[f64],
        values: &[f64],
    ) -> Result<()> {
        if self.is_full() {
            return Err(Error::Usage("rollout buffer is already full".into()));
        }
        for len in [
            observations.len(),
            actions.len(),
            raw_rewards.len(),
            rewards.len(),
            dones.len(),
            log_probs.len(),
            values.len(),
        ] {
            check_dim("per-env step data", self.n_envs, len)?;
        }
        if let Some(lp) = log_probs.iter().find(|lp| !lp.is_finite()) {
            return Err(Error::Divergence(format!("behaviour log-prob {lp}")));
        }
        for (o, a) in observations.iter().zip(actions) {
            check_dim("stored observation", self.obs_dim, o.len())?;
            check_dim("stored action", self.action_width, a.len())?;
            self.observations.extend_from_slice(o);
            self.actions.extend_from_slice(a);
        }
        self.raw_rewards.extend_from_slice(raw_rewards);
        self.rewards.extend_from_slice(rewards);
        self.dones.extend_from_slice(dones);
        self.log_probs.extend_from_slice(log_probs);
        self.values.extend_from_slice(values);
        self.filled += 1;
        Ok(())
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_width..(i + 1) * self.action_width]
    }

    pub fn observation_matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.obs_dim), &self.observations).expect("layout")
    }

    /// Observations of the selected transitions as a batch matrix.
    pub fn gather_observations(&self, idx: &[usize]) -> Array2<f64> {
        let mut flat = Vec::with_capacity(idx.len() * self.obs_dim);
        for &i in idx {
            flat.extend_from_slice(self.observation(i));
        }
        Array2::from_shape_vec((idx.len(), self.obs_dim), flat).expect("layout")
    }

    /// Fills `advantages` with GAE(gamma, gae_lambda) and `returns` with
    /// `advantages + values`. `last_values` bootstraps each env after the
    /// final stored step.
    pub fn compute_returns_and_advantages(&mut self, last_values: &[f64], gamma: f64, gae_lambda: f64) -> Result<()> {
        if !self.is_full() {
            return Err(Error::Usage("advantages need a full rollout buffer".into()));
        }
        check_dim("bootstrap values", self.n_envs, last_values.len())?;
        let n = self.capacity();
        self.advantages = vec![0.0; n];
        for e in 0..self.n_envs {
            let col = |v: &[f64]| (0..self.n_steps).map(|t| v[t * self.n_envs + e]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..self.n_steps).map(|t| self.dones[t * self.n_envs + e]).collect();
            let adv =
                gae_advantages(&col(&self.rewards), &col(&self.values), &dones, last_values[e], gamma, gae_lambda);
            for (t, a) in adv.into_iter().enumerate() {
                self.advantages[t * self.n_envs + e] = a;
            }
        }
        self.returns = self.advantages.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        Ok(())
    }
}

/// Shuffles `0..len` and splits it into `ceil(len / batch_size)` minibatches;
/// the last one may be smaller.
pub fn minibatch_indices<R: Rng + ?Sized>(len: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minibatches_partition_the_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mbs = minibatch_indices(1152, 512, &mut rng);
        assert_eq!(mbs.len(), 3);
        assert_eq!(mbs[2].len(), 128);
        let mut all: Vec<usize> = mbs.concat();
        all.sort_unstable();
        assert_eq!(all, (0..1152).collect::<Vec<_>>());
    }

    #[test]
    fn advantages_require_full_buffer() {
        let mut b = RolloutBuffer::new(2, 1, 1, 1);
        assert!(b.compute_returns_and_advantages(&[0.0], 0.9, 0.9).is_err());
        b.push_step(&[vec![0.0]], &[vec![0.0]], &[1.0], &[1.0], &[false], &[-0.7], &[0.2]).unwrap();
        b.push_step(&[vec![1.0]], &[vec![1.0]], &[0.0], &[0.0], &[true], &[-0.7], &[0.4]).unwrap();
        assert!(b.push_step(&[vec![1.0]], &[vec![1.0]], &[0.0], &[0.0], &[true], &[-0.7], &[0.4]).is_err());
        b.compute_returns_and_advantages(&[5.0], 0.9, 1.0).unwrap();
        for i in 0..2 {
            assert!((b.advantages[i] - (b.returns[i] - b.values[i])).abs() < 1e-12);
        }
        // second step ended the episode: bootstrap ignored
        assert!((b.returns[1] - 0.0).abs() < 1e-12);
        assert!((b.returns[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_log_prob_is_rejected() {
        let mut b = RolloutBuffer::new(1, 1, 1, 1);
        let err = b.push_step(&[vec![0.0]], &[vec![0.0]], &[0.0], &[0.0], &[false], &[f64::NAN], &[0.0]);
        assert!(matches!(err, Err(Error::Divergence(_))));
    }
}
