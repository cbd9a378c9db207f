use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RolloutBuffer;
use crate::agent::{stack_rows, Agent};
use crate::envs::{EpisodeInfo, RewardScaler, RunningNormalizer, VecEnv};
use crate::error::{Error, Result};

/// Which policy acts in the environment while collecting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPolicy {
    Student,
    Teacher,
}

/// Episodes finished during one [`RolloutWorker::collect`] call.
#[derive(Debug, Clone, Default)]
pub struct CollectStats {
    pub episodes: Vec<EpisodeInfo>,
    pub env_steps: usize,
}

const RECENT_EPISODES: usize = 100;

/// Owns the vectorized environments, the live normalization statistics and
/// the action-sampling stream of one training run.
pub struct RolloutWorker {
    venv: VecEnv,
    obs: Vec<Vec<f64>>,
    obs_norm: Option<RunningNormalizer>,
    reward_scaler: Option<RewardScaler>,
    rng: ChaCha8Rng,
    recent: VecDeque<f64>,
    episodes_completed: usize,
}

impl RolloutWorker {
    pub fn new(
        mut venv: VecEnv,
        mut obs_norm: Option<RunningNormalizer>,
        reward_scaler: Option<RewardScaler>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let raw = venv.reset_all()?;
        let obs = raw
            .iter()
            .map(|o| match obs_norm.as_mut() {
                Some(n) => n.normalize_observation(o),
                None => Ok(o.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            venv,
            obs,
            obs_norm,
            reward_scaler,
            rng,
            recent: VecDeque::with_capacity(RECENT_EPISODES),
            episodes_completed: 0,
        })
    }

    pub fn n_envs(&self) -> usize {
        self.venv.len()
    }

    pub fn obs_norm(&self) -> Option<&RunningNormalizer> {
        self.obs_norm.as_ref()
    }

    pub fn reward_scaler(&self) -> Option<&RewardScaler> {
        self.reward_scaler.as_ref()
    }

    /// Current (normalized) observations, one per env.
    pub fn current_observations(&self) -> &[Vec<f64>] {
        &self.obs
    }

    /// Mean raw return of the last 100 finished episodes (NaN before any).
    pub fn mean_recent_return(&self) -> f64 {
        if self.recent.is_empty() {
            f64::NAN
        } else {
            self.recent.iter().sum::<f64>() / self.recent.len() as f64
        }
    }

    pub fn episodes_completed(&self) -> usize {
        self.episodes_completed
    }

    pub fn level_log(&self) -> Vec<u64> {
        self.venv.level_log()
    }

    /// Fills `buffer` by acting with `student` or `teacher` (per `control`).
    /// Values and the truncation bootstrap always come from the student's
    /// value network; log-probs from whichever policy acted. Returns the
    /// finished episodes (raw rewards).
    pub fn collect(
        &mut self,
        buffer: &mut RolloutBuffer,
        control: ControlPolicy,
        student: &Agent,
        teacher: Option<&Agent>,
        gamma: f64,
    ) -> Result<CollectStats> {
        let actor = match (control, teacher) {
            (ControlPolicy::Student, _) => student,
            (ControlPolicy::Teacher, Some(t)) => t,
            (ControlPolicy::Teacher, None) => {
                return Err(Error::Usage("teacher-driven collection needs a teacher".into()))
            }
        };
        if !buffer.is_empty() {
            return Err(Error::Usage("collect expects an empty rollout buffer".into()));
        }
        let n_envs = self.venv.len();
        let mut stats = CollectStats::default();
        while !buffer.is_full() {
            let batch = stack_rows(&self.obs);
            let dists = actor.distributions(batch.view())?;
            let values = student.values(batch.view())?;
            let actions: Vec<Vec<f64>> = dists.iter().map(|d| d.sample(&mut self.rng)).collect();
            let log_probs: Vec<f64> = dists.iter().zip(&actions).map(|(d, a)| d.log_prob(a)).collect();

            let steps = self.venv.step(&actions)?;
            let mut raw_rewards = Vec::with_capacity(n_envs);
            let mut rewards = Vec::with_capacity(n_envs);
            let mut dones = Vec::with_capacity(n_envs);
            let mut next_obs = Vec::with_capacity(n_envs);
            for (i, s) in steps.into_iter().enumerate() {
                let done = s.done();
                let mut r = match self.reward_scaler.as_mut() {
                    Some(scaler) => scaler.normalize_reward(i, s.reward, done),
                    None => s.reward,
                };
                if s.truncated && !s.terminated {
                    let last = s.terminal_observation.as_ref().expect("set on episode end");
                    let last = match &self.obs_norm {
                        Some(n) => n.normalize(last)?,
                        None => last.clone(),
                    };
                    r += gamma * student.value_of(&last)?;
                }
                if let Some(ep) = s.episode {
                    if self.recent.len() == RECENT_EPISODES {
                        self.recent.pop_front();
                    }
                    self.recent.push_back(ep.ret);
                    self.episodes_completed += 1;
                    stats.episodes.push(ep);
                }
                raw_rewards.push(s.reward);
                rewards.push(r);
                dones.push(done);
                next_obs.push(match self.obs_norm.as_mut() {
                    Some(n) => n.normalize_observation(&s.observation)?,
                    None => s.observation,
                });
            }
            buffer.push_step(&self.obs, &actions, &raw_rewards, &rewards, &dones, &log_probs, &values)?;
            self.obs = next_obs;
            stats.env_steps += n_envs;
        }
        Ok(stats)
    }

    /// Student values of the current observations, for GAE bootstrapping.
    pub fn bootstrap_values(&self, student: &Agent) -> Result<Vec<f64>> {
        student.values(stack_rows(&self.obs).view())
    }

    /// Freezes the live normalizers and returns them (observation stats,
    /// discounted-return stats).
    pub fn frozen_normalizers(&self) -> (Option<RunningNormalizer>, Option<RunningNormalizer>) {
        let obs = self.obs_norm.clone().map(|mut n| {
            n.freeze();
            n
        });
        let rew = self.reward_scaler.as_ref().map(|s| {
            let mut n = s.stats.clone();
            n.freeze();
            n
        });
        (obs, rew)
    }
}
