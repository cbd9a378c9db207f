use super::{discrete_action, ActionSpace, EnvRng, EnvSpec, Environment, StepResult};
use crate::error::Result;

/// Bit `s` says which action index moves right in state `s`.
const KEY: u32 = 0x5A3C_96E1;

/// A deterministic chain of states. Both ends are terminal: reaching the
/// right end pays 1, reaching the left end pays a small distractor reward.
/// Which of the two actions moves right differs from state to state (a
/// fixed key), so a policy has to be learned per state. Observations are
/// one-hot state indices.
#[derive(Debug, Clone)]
pub struct ChainWalk {
    spec: EnvSpec,
    n_states: usize,
    start: usize,
    left_reward: f64,
    state: usize,
    steps: usize,
}

impl Default for ChainWalk {
    fn default() -> Self {
        Self::new(20)
    }
}

impl ChainWalk {
    pub fn new(n_states: usize) -> Self {
        assert!(n_states >= 4, "chain needs at least 4 states");
        Self {
            spec: EnvSpec {
                observation_dim: n_states,
                action_space: ActionSpace::Discrete { n: 2 },
                max_episode_steps: 100,
                level_seed_set: None,
            },
            n_states,
            start: n_states / 2,
            left_reward: 0.1,
            state: n_states / 2,
            steps: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Places the walker at `state` (tests and exact evaluation).
    pub fn set_state(&mut self, state: usize) {
        assert!(state > 0 && state + 1 < self.n_states);
        self.state = state;
    }

    fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        v
    }

    pub fn observation_of(&self, state: usize) -> Vec<f64> {
        self.one_hot(state)
    }

    /// The action index that moves right in state `s`.
    pub fn right_action(&self, s: usize) -> usize {
        ((KEY >> (s % 32)) & 1) as usize
    }

    pub fn left_action(&self, s: usize) -> usize {
        1 - self.right_action(s)
    }

    /// Transition table: (next state, reward, terminated).
    pub fn transition(&self, s: usize, action: usize) -> (usize, f64, bool) {
        self.move_dir(s, action == self.right_action(s))
    }

    fn move_dir(&self, s: usize, right: bool) -> (usize, f64, bool) {
        let next = if right { s + 1 } else { s - 1 };
        if next + 1 == self.n_states {
            (next, 1.0, true)
        } else if next == 0 {
            (next, self.left_reward, true)
        } else {
            (next, 0.0, false)
        }
    }

    /// Non-terminal states, i.e. those the agent can observe.
    pub fn interior_states(&self) -> std::ops::Range<usize> {
        1..self.n_states - 1
    }

    /// Optimal discounted state values by value iteration (terminal states 0).
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        loop {
            let mut delta: f64 = 0.0;
            for s in self.interior_states() {
                let best = [false, true]
                    .iter()
                    .map(|&right| {
                        let (n, r, done) = self.move_dir(s, right);
                        r + if done { 0.0 } else { gamma * v[n] }
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < tol {
                return v;
            }
        }
    }

    /// Greedy action of the value-iteration solution.
    pub fn optimal_action(&self, values: &[f64], gamma: f64, s: usize) -> usize {
        let q = |a| {
            let (n, r, done) = self.transition(s, a);
            r + if done { 0.0 } else { gamma * values[n] }
        };
        let (right, left) = (self.right_action(s), self.left_action(s));
        if q(right) >= q(left) {
            right
        } else {
            left
        }
    }

    /// Exact expected (discounted with `gamma`) return from the start state of
    /// a stochastic policy, over the env's time limit, by backward induction.
    /// `policy(s)` gives the probability of moving right in state `s`.
    pub fn exact_policy_return(&self, policy: impl Fn(usize) -> f64, gamma: f64) -> f64 {
        self.exact_policy_moments(policy, gamma).0
    }

    /// Mean and variance of the return of `policy` from the start state.
    pub fn exact_policy_moments(&self, policy: impl Fn(usize) -> f64, gamma: f64) -> (f64, f64) {
        // first and second moments of the return-to-go with k steps left
        let mut m1 = vec![0.0; self.n_states];
        let mut m2 = vec![0.0; self.n_states];
        for _ in 0..self.spec.max_episode_steps {
            let mut n1 = vec![0.0; self.n_states];
            let mut n2 = vec![0.0; self.n_states];
            for s in self.interior_states() {
                let p_right = policy(s);
                for (right, p) in [(true, p_right), (false, 1.0 - p_right)] {
                    let (n, r, done) = self.move_dir(s, right);
                    let (g1, g2) = if done { (0.0, 0.0) } else { (m1[n], m2[n]) };
                    n1[s] += p * (r + gamma * g1);
                    n2[s] += p * (r * r + 2.0 * r * gamma * g1 + gamma * gamma * g2);
                }
            }
            m1 = n1;
            m2 = n2;
        }
        let mean = m1[self.start];
        (mean, m2[self.start] - mean * mean)
    }

    /// Undiscounted return of the value-iteration optimal policy.
    pub fn optimal_return(&self, gamma: f64) -> f64 {
        let v = self.value_iteration(gamma, 1e-12);
        self.exact_policy_return(
            |s| f64::from(u8::from(self.optimal_action(&v, gamma, s) == self.right_action(s))),
            1.0,
        )
    }
}

impl Environment for ChainWalk {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut EnvRng, _level_seed: Option<u64>) -> Result<Vec<f64>> {
        self.state = self.start;
        self.steps = 0;
        Ok(self.one_hot(self.state))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = discrete_action(action, 2)?;
        let (next, reward, terminated) = self.transition(self.state, a);
        self.state = next;
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.spec.max_episode_steps;
        Ok(StepResult { observation: self.one_hot(next), reward, terminated, truncated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn reset_is_one_hot_start() {
        let mut env = ChainWalk::default();
        let obs = env.reset(&mut EnvRng::seed_from_u64(0), None).unwrap();
        assert_eq!(obs.len(), 20);
        assert_eq!(obs.iter().sum::<f64>(), 1.0);
        assert_eq!(obs[env.start_state()], 1.0);
    }

    #[test]
    fn right_end_pays_one_and_terminates() {
        let mut env = ChainWalk::default();
        env.reset(&mut EnvRng::seed_from_u64(0), None).unwrap();
        env.set_state(18);
        let r = env.step(&[env.right_action(18) as f64]).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.terminated && !r.truncated);
    }

    #[test]
    fn time_limit_truncates() {
        let mut env = ChainWalk::default();
        env.reset(&mut EnvRng::seed_from_u64(0), None).unwrap();
        let mut last = None;
        for t in 0..100 {
            // oscillate so we never reach an end
            let s = env.state();
            let a = if t % 2 == 0 { env.right_action(s) } else { env.left_action(s) };
            last = Some(env.step(&[a as f64]).unwrap());
        }
        let last = last.unwrap();
        assert!(last.truncated && !last.terminated);
    }

    #[test]
    fn invalid_discrete_action_is_rejected() {
        let mut env = ChainWalk::default();
        env.reset(&mut EnvRng::seed_from_u64(0), None).unwrap();
        assert!(env.step(&[2.0]).is_err());
        assert!(env.step(&[0.5]).is_err());
    }

    #[test]
    fn value_iteration_prefers_the_far_goal() {
        let env = ChainWalk::default();
        let gamma = 0.995;
        let v = env.value_iteration(gamma, 1e-12);
        for s in env.interior_states() {
            assert_eq!(env.optimal_action(&v, gamma, s), env.right_action(s));
            // deterministic chain: V*(s) = gamma^(steps to right end - 1)
            let expected = gamma.powi((env.n_states() - 2 - s) as i32);
            assert!((v[s] - expected).abs() < 1e-9);
        }
        assert_eq!(env.optimal_return(gamma), 1.0);
    }
}
