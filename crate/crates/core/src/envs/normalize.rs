use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

/// Running mean/variance of a vector stream with clipping normalization.
///
/// Statistics are the exact population mean and variance of everything seen
/// so far (Welford updates). Once frozen they never change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub clip_range: f64,
    pub epsilon: f64,
    frozen: bool,
    /// Sum of squared deviations, kept for the Welford recurrence.
    pub(crate) m2: Vec<f64>,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            variance: vec![1.0; dim],
            clip_range: 10.0,
            epsilon: 1e-8,
            frozen: false,
            m2: vec![0.0; dim],
        }
    }

    /// Rebuilds a normalizer from stored statistics.
    pub fn from_stats(
        count: f64,
        mean: Vec<f64>,
        variance: Vec<f64>,
        clip_range: f64,
        epsilon: f64,
        frozen: bool,
    ) -> Self {
        let m2 = variance.iter().map(|v| v * count).collect();
        Self { count, mean, variance, clip_range, epsilon, frozen, m2 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_dim("normalizer input", self.dim(), x.len())?;
        if self.frozen {
            return Ok(());
        }
        self.count += 1.0;
        for (i, &xi) in x.iter().enumerate() {
            let delta = xi - self.mean[i];
            self.mean[i] += delta / self.count;
            self.m2[i] += delta * (xi - self.mean[i]);
            self.variance[i] = self.m2[i] / self.count;
        }
        Ok(())
    }

    /// `(x - mean) / sqrt(variance + epsilon)`, clipped to `±clip_range`.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("normalizer input", self.dim(), x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((x, m), v)| ((x - m) / (v + self.epsilon).sqrt()).clamp(-self.clip_range, self.clip_range))
            .collect())
    }

    /// Updates the statistics (unless frozen) and then normalizes.
    pub fn normalize_observation(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.update(x)?;
        self.normalize(x)
    }
}

/// Reward scaling by the running standard deviation of the discounted
/// return, tracked separately for every sub-environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    pub stats: RunningNormalizer,
    pub gamma: f64,
    returns: Vec<f64>,
}

impl RewardScaler {
    pub fn new(gamma: f64, n_envs: usize) -> Self {
        Self { stats: RunningNormalizer::new(1), gamma, returns: vec![0.0; n_envs] }
    }

    pub fn from_stats(stats: RunningNormalizer, gamma: f64, n_envs: usize) -> Self {
        Self { stats, gamma, returns: vec![0.0; n_envs] }
    }

    /// Resizes the per-env return accumulators, e.g. when a frozen scaler is
    /// reused with a different number of environments.
    pub fn with_envs(mut self, n_envs: usize) -> Self {
        self.returns = vec![0.0; n_envs];
        self
    }

    pub fn freeze(&mut self) {
        self.stats.freeze();
    }

    /// Scales `reward` from sub-env `env`; `done` resets that env's return.
    pub fn normalize_reward(&mut self, env: usize, reward: f64, done: bool) -> f64 {
        self.returns[env] = self.returns[env] * self.gamma + reward;
        self.stats.update(&[self.returns[env]]).expect("dim 1");
        if done {
            self.returns[env] = 0.0;
        }
        self.scale(reward)
    }

    /// Divides by the running return standard deviation without updating.
    pub fn scale(&self, reward: f64) -> f64 {
        let c = self.stats.clip_range;
        (reward / (self.stats.variance[0] + self.stats.epsilon).sqrt()).clamp(-c, c)
    }
}
