use super::{EnvFamily, EnvRng, EnvSpec, Environment, LevelSplit};
use crate::error::{Error, Result};
use crate::seeding::rng_for;

/// Raw (unnormalized) statistics of a finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeInfo {
    pub ret: f64,
    pub len: usize,
    pub terminated: bool,
}

/// Outcome of one sub-environment step inside a [`VecEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    /// Observation to act on next: a fresh initial observation when the
    /// episode just ended.
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// Last observation of the finished episode (set when it ended).
    pub terminal_observation: Option<Vec<f64>>,
    pub episode: Option<EpisodeInfo>,
}

impl VecStep {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// A batch of independently seeded sub-environments stepped in index order,
/// auto-resetting finished episodes.
pub struct VecEnv {
    envs: Vec<Box<dyn Environment>>,
    rngs: Vec<EnvRng>,
    ep_return: Vec<f64>,
    ep_len: Vec<usize>,
}

impl VecEnv {
    pub fn new(family: EnvFamily, split: LevelSplit, n_envs: usize, seed: u64) -> Result<Self> {
        if n_envs == 0 {
            return Err(Error::Config("n_envs must be positive".into()));
        }
        let envs = (0..n_envs).map(|_| family.make(split)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_envs(envs, seed))
    }

    /// Wraps existing environments; sub-env `i` gets its own RNG stream
    /// derived from `seed`.
    pub fn from_envs(envs: Vec<Box<dyn Environment>>, seed: u64) -> Self {
        let n = envs.len();
        Self {
            envs,
            rngs: (0..n as u64).map(|i| rng_for(seed, 1000 + i)).collect(),
            ep_return: vec![0.0; n],
            ep_len: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn spec(&self) -> &EnvSpec {
        self.envs[0].spec()
    }

    pub fn reset_all(&mut self) -> Result<Vec<Vec<f64>>> {
        self.ep_return.iter_mut().for_each(|r| *r = 0.0);
        self.ep_len.iter_mut().for_each(|l| *l = 0);
        self.envs.iter_mut().zip(self.rngs.iter_mut()).map(|(env, rng)| env.reset(rng, None)).collect()
    }

    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<VecStep>> {
        if actions.len() != self.envs.len() {
            return Err(Error::Usage(format!("{} actions for {} environments", actions.len(), self.envs.len())));
        }
        let mut out = Vec::with_capacity(actions.len());
        for (i, action) in actions.iter().enumerate() {
            let r = self.envs[i].step(action)?;
            if r.observation.iter().any(|x| !x.is_finite()) || !r.reward.is_finite() {
                return Err(Error::Divergence(format!(
                    "env {i} produced a non-finite transition: obs {:?}, reward {}",
                    r.observation, r.reward
                )));
            }
            self.ep_return[i] += r.reward;
            self.ep_len[i] += 1;
            let done = r.terminated || r.truncated;
            let (observation, terminal_observation, episode) = if done {
                let info = EpisodeInfo { ret: self.ep_return[i], len: self.ep_len[i], terminated: r.terminated };
                self.ep_return[i] = 0.0;
                self.ep_len[i] = 0;
                let fresh = self.envs[i].reset(&mut self.rngs[i], None)?;
                (fresh, Some(r.observation), Some(info))
            } else {
                (r.observation, None, None)
            };
            out.push(VecStep {
                observation,
                reward: r.reward,
                terminated: r.terminated,
                truncated: r.truncated,
                terminal_observation,
                episode,
            });
        }
        Ok(out)
    }

    /// Level seeds used by all sub-environments, in env order.
    pub fn level_log(&self) -> Vec<u64> {
        self.envs.iter().flat_map(|e| e.level_log().iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::ChainWalk;

    #[test]
    fn identical_envs_give_identical_results() {
        let envs: Vec<Box<dyn Environment>> =
            (0..4).map(|_| Box::new(ChainWalk::default()) as Box<dyn Environment>).collect();
        let mut v = VecEnv::from_envs(envs, 1);
        v.reset_all().unwrap();
        let steps = v.step(&vec![vec![1.0]; 4]).unwrap();
        assert!(steps.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn length_mismatch_is_usage_error() {
        let mut v = VecEnv::new(EnvFamily::ChainWalk, LevelSplit::None, 3, 0).unwrap();
        v.reset_all().unwrap();
        assert!(matches!(v.step(&[vec![0.0]]), Err(Error::Usage(_))));
    }

    #[test]
    fn finished_env_reports_fresh_observation_and_raw_return() {
        let mut v = VecEnv::new(EnvFamily::ChainWalk, LevelSplit::None, 1, 0).unwrap();
        let start = v.reset_all().unwrap()[0].clone();
        let mut manual = 0.0;
        // walk left from the start state into the left end
        let chain = ChainWalk::default();
        let start_state = chain.start_state();
        for t in 0..start_state {
            let left = chain.left_action(start_state - t) as f64;
            let s = v.step(&[vec![left]]).unwrap().remove(0);
            manual += s.reward;
            if t + 1 == start_state {
                assert!(s.terminated);
                assert_eq!(s.observation, start);
                let ep = s.episode.unwrap();
                assert_eq!(ep.ret, manual);
                assert_eq!(ep.len, start_state);
                assert!(s.terminal_observation.is_some());
            } else {
                assert!(s.episode.is_none());
            }
        }
    }

    #[test]
    fn non_procedural_split_is_config_error() {
        assert!(matches!(VecEnv::new(EnvFamily::PointMass, LevelSplit::Train, 2, 0), Err(Error::Config(_))));
    }
}
